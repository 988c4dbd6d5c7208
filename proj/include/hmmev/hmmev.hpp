#pragma once

#include "hmmev/baum_welch.hpp"
#include "hmmev/detection.hpp"
#include "hmmev/diagnostics.hpp"
#include "hmmev/evaluation.hpp"
#include "hmmev/forward.hpp"
#include "hmmev/io.hpp"
#include "hmmev/pipeline.hpp"
#include "hmmev/synthesis.hpp"
#include "hmmev/trial.hpp"
#include "hmmev/viterbi.hpp"
