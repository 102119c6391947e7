#pragma once

// Umbrella header for the whole library.

#include "vtc/corrector.hpp"
#include "vtc/dataset.hpp"
#include "vtc/detector.hpp"
#include "vtc/errors.hpp"
#include "vtc/eval.hpp"
#include "vtc/model.hpp"
#include "vtc/ops.hpp"
#include "vtc/optim.hpp"
#include "vtc/rng.hpp"
#include "vtc/synth.hpp"
#include "vtc/tensor.hpp"
#include "vtc/text_encoder.hpp"
#include "vtc/trainer.hpp"
#include "vtc/vocab.hpp"
