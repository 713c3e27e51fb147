#pragma once

#include "frustra/artifact.hpp"
#include "frustra/error.hpp"
#include "frustra/eval.hpp"
#include "frustra/features.hpp"
#include "frustra/ingest.hpp"
#include "frustra/labeling.hpp"
#include "frustra/models_sequence.hpp"
#include "frustra/models_tabular.hpp"
#include "frustra/parallel.hpp"
#include "frustra/pipeline.hpp"
#include "frustra/random.hpp"
#include "frustra/sessionize.hpp"
#include "frustra/synth.hpp"
#include "frustra/text.hpp"
#include "frustra/transform.hpp"
#include "frustra/tree.hpp"
