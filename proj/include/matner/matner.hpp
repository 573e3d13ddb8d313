#pragma once
// Convenience umbrella for the whole library.

#include "matner/bundle.hpp"
#include "matner/common.hpp"
#include "matner/corpus.hpp"
#include "matner/eval.hpp"
#include "matner/grad_check.hpp"
#include "matner/matrix.hpp"
#include "matner/model.hpp"
#include "matner/optim.hpp"
#include "matner/rng.hpp"
#include "matner/synth.hpp"
#include "matner/train.hpp"
#include "matner/version.hpp"
