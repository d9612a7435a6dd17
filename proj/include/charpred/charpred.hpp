#pragma once

#include "charpred/char_beam.hpp"
#include "charpred/char_ngram.hpp"
#include "charpred/corpus_prep.hpp"
#include "charpred/error.hpp"
#include "charpred/eval.hpp"
#include "charpred/lm_backend.hpp"
#include "charpred/remote_backend.hpp"
#include "charpred/symbol_set.hpp"
#include "charpred/text.hpp"
#include "charpred/token_vocab.hpp"
#include "charpred/witten_bell.hpp"
