// Umbrella header.
#pragma once

#include "dtrf/common.hpp"
#include "dtrf/config.hpp"
#include "dtrf/corpus.hpp"
#include "dtrf/decoder.hpp"
#include "dtrf/gradcheck.hpp"
#include "dtrf/model.hpp"
#include "dtrf/ops.hpp"
#include "dtrf/pipeline.hpp"
#include "dtrf/rouge.hpp"
#include "dtrf/sequence.hpp"
#include "dtrf/tensor.hpp"
#include "dtrf/tokenizer.hpp"
#include "dtrf/trainer.hpp"
