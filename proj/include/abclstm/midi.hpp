#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "abclstm/abc.hpp"
#include "abclstm/error.hpp"

namespace abclstm {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kMaxVlq = 0x0FFFFFFF;

/// MIDI variable-length quantity: 7-bit groups, most significant first,
/// continuation bit on every byte but the last.
inline void append_vlq(Bytes& out, std::uint32_t value) {
    if (value > kMaxVlq) throw ValueError("value " + std::to_string(value) + " exceeds the 28-bit VLQ range");
    std::uint8_t groups[4];
    int n = 0;
    do {
        groups[n++] = static_cast<std::uint8_t>(value & 0x7F);
        value >>= 7;
    } while (value != 0);
    while (n-- > 0) out.push_back(static_cast<std::uint8_t>(groups[n] | (n > 0 ? 0x80 : 0x00)));
}

inline Bytes encode_vlq(std::uint32_t value) {
    Bytes out;
    append_vlq(out, value);
    return out;
}

/// Reads a VLQ at `pos` and advances it.
inline std::uint32_t decode_vlq(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
        if (pos >= bytes.size()) throw FormatError("truncated variable-length quantity");
        const std::uint8_t b = bytes[pos++];
        value = (value << 7) | (b & 0x7F);
        if (!(b & 0x80)) return value;
    }
    throw FormatError("variable-length quantity longer than 4 bytes");
}

/// Whole-note fraction to ticks, rounded half up.
inline std::uint32_t duration_to_ticks(Rational duration, std::uint32_t ticks_per_quarter = 480) {
    if (!(duration > Rational(0))) throw ValueError("duration must be positive, got " + duration.str());
    const std::int64_t scaled = duration.num() * 4 * static_cast<std::int64_t>(ticks_per_quarter);
    return static_cast<std::uint32_t>((2 * scaled + duration.den()) / (2 * duration.den()));
}

struct TrackEvent {
    std::uint32_t delta = 0;
    Bytes data; // status byte onward; meta events start with 0xFF
};

struct MidiDoc {
    std::uint16_t ticks_per_quarter = 480;
    std::uint32_t tempo = 500000; // microseconds per quarter note
    std::vector<TrackEvent> track;
};

struct RenderOptions {
    std::uint32_t tempo = 500000;
    std::uint8_t velocity = 90;
    std::uint8_t channel = 0;
};

/// Tempo meta, then a note-on/note-off pair per note; rests only add delay.
inline MidiDoc build_midi(const TuneAst& ast, const RenderOptions& opt = {}) {
    if (opt.tempo == 0 || opt.tempo > 0xFFFFFF) throw ValueError("tempo must be in 1..16777215 us per quarter");
    if (opt.channel > 15 || opt.velocity > 127) throw ValueError("channel or velocity out of range");
    MidiDoc doc;
    doc.tempo = opt.tempo;
    doc.track.push_back({0, {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(opt.tempo >> 16),
                             static_cast<std::uint8_t>(opt.tempo >> 8), static_cast<std::uint8_t>(opt.tempo)}});
    KeySignature key = ast.key;
    BarAccidentals bar;
    std::uint32_t pending = 0;
    const auto on = static_cast<std::uint8_t>(0x90 | opt.channel);
    const auto off = static_cast<std::uint8_t>(0x80 | opt.channel);
    for (const auto& ev : ast.events) {
        if (const auto* n = std::get_if<NoteEvent>(&ev)) {
            const auto pitch = static_cast<std::uint8_t>(pitch_to_midi(*n, key, bar));
            doc.track.push_back({pending, {on, pitch, opt.velocity}});
            doc.track.push_back({duration_to_ticks(n->duration, doc.ticks_per_quarter), {off, pitch, 0x40}});
            pending = 0;
        } else if (const auto* r = std::get_if<Rest>(&ev)) {
            pending += duration_to_ticks(r->duration, doc.ticks_per_quarter);
        } else if (std::holds_alternative<BarLine>(ev)) {
            bar.clear();
        } else if (const auto* k = std::get_if<KeyChange>(&ev)) {
            key = k->key;
            bar.clear();
        }
    }
    doc.track.push_back({pending, {0xFF, 0x2F, 0x00}});
    return doc;
}

namespace detail {

inline void put_u32_be(Bytes& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void put_u16_be(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32_be(std::span<const std::uint8_t> b, std::size_t pos) {
    return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) | (std::uint32_t{b[pos + 2]} << 8) |
           std::uint32_t{b[pos + 3]};
}

} // namespace detail

/// Format-0 Standard MIDI File bytes.
inline Bytes render_smf(const MidiDoc& doc) {
    Bytes track;
    for (const auto& ev : doc.track) {
        append_vlq(track, ev.delta);
        track.insert(track.end(), ev.data.begin(), ev.data.end());
    }
    Bytes out = {'M', 'T', 'h', 'd'};
    detail::put_u32_be(out, 6);
    detail::put_u16_be(out, 0); // format 0
    detail::put_u16_be(out, 1); // one track
    detail::put_u16_be(out, doc.ticks_per_quarter);
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    detail::put_u32_be(out, static_cast<std::uint32_t>(track.size()));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

inline Bytes render_smf(const TuneAst& ast, const RenderOptions& opt = {}) { return render_smf(build_midi(ast, opt)); }

/// Reads back a format-0 file produced by render_smf. Checks chunk lengths
/// against the bytes actually present.
inline MidiDoc read_smf(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 14 || std::string(bytes.begin(), bytes.begin() + 4) != "MThd")
        throw FormatError("missing MThd header");
    if (detail::get_u32_be(bytes, 4) != 6) throw FormatError("MThd length is not 6");
    MidiDoc doc;
    doc.ticks_per_quarter = static_cast<std::uint16_t>((bytes[12] << 8) | bytes[13]);
    std::size_t pos = 14;
    if (bytes.size() < pos + 8 || std::string(bytes.begin() + 14, bytes.begin() + 18) != "MTrk")
        throw FormatError("missing MTrk chunk");
    const std::uint32_t len = detail::get_u32_be(bytes, 18);
    pos = 22;
    if (bytes.size() != pos + len)
        throw FormatError("MTrk length " + std::to_string(len) + " does not match " +
                          std::to_string(bytes.size() - pos) + " remaining bytes");
    std::uint8_t running = 0;
    while (pos < bytes.size()) {
        TrackEvent ev;
        ev.delta = decode_vlq(bytes, pos);
        if (pos >= bytes.size()) throw FormatError("event truncated");
        std::uint8_t status = bytes[pos];
        if (status == 0xFF) {
            if (pos + 2 > bytes.size()) throw FormatError("meta event truncated");
            std::size_t p = pos + 2;
            const std::uint32_t mlen = decode_vlq(bytes, p);
            if (p + mlen > bytes.size()) throw FormatError("meta event data truncated");
            ev.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(p + mlen));
            pos = p + mlen;
            if (ev.data[1] == 0x51 && mlen == 3)
                doc.tempo = (std::uint32_t{ev.data[3]} << 16) | (std::uint32_t{ev.data[4]} << 8) | ev.data[5];
        } else {
            if (status & 0x80) {
                running = status;
                ++pos;
            } else if (running == 0) {
                throw FormatError("data byte without running status");
            }
            const std::uint8_t kind = running & 0xF0;
            const std::size_t n = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
            if (pos + n > bytes.size()) throw FormatError("channel event truncated");
            ev.data.push_back(running);
            ev.data.insert(ev.data.end(), bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
            pos += n;
        }
        doc.track.push_back(std::move(ev));
    }
    return doc;
}

} // namespace abclstm
