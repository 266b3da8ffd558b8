#pragma once

#include "abclstm/error.hpp"
#include "abclstm/numerics.hpp"
#include "abclstm/corpus.hpp"
#include "abclstm/config.hpp"
#include "abclstm/model.hpp"
#include "abclstm/adam.hpp"
#include "abclstm/checkpoint.hpp"
#include "abclstm/trainer.hpp"
#include "abclstm/sampler.hpp"
#include "abclstm/abc.hpp"
#include "abclstm/midi.hpp"
#include "abclstm/plot.hpp"
