// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ew2v/numerics/error.hpp"
#include "ew2v/numerics/grad_check.hpp"
#include "ew2v/numerics/ops.hpp"
#include "ew2v/numerics/rng.hpp"
#include "ew2v/numerics/tape.hpp"
#include "ew2v/numerics/tensor.hpp"
#include "ew2v/audio/corpus.hpp"
#include "ew2v/audio/mixing.hpp"
#include "ew2v/audio/waveform.hpp"
#include "ew2v/model/context_encoder.hpp"
#include "ew2v/model/feature_encoder.hpp"
#include "ew2v/model/quantizer.hpp"
#include "ew2v/model/wav2vec.hpp"
#include "ew2v/losses.hpp"
#include "ew2v/training/checkpoint.hpp"
#include "ew2v/training/config.hpp"
#include "ew2v/training/ctc.hpp"
#include "ew2v/training/data.hpp"
#include "ew2v/training/finetune.hpp"
#include "ew2v/training/optim.hpp"
#include "ew2v/training/pretrain.hpp"
#include "ew2v/training/vocab.hpp"
#include "ew2v/evaluation/decode.hpp"
#include "ew2v/evaluation/experiment.hpp"
#include "ew2v/evaluation/grid.hpp"
#include "ew2v/evaluation/reports.hpp"
#include "ew2v/evaluation/similarity.hpp"
#include "ew2v/evaluation/wer.hpp"
#include "ew2v/cli.hpp"
