#pragma once

#include "specdec/bench.hpp"
#include "specdec/draft.hpp"
#include "specdec/engine.hpp"
#include "specdec/errors.hpp"
#include "specdec/fsm.hpp"
#include "specdec/model.hpp"
#include "specdec/recycle.hpp"
#include "specdec/retrieval.hpp"
#include "specdec/schema.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/tree.hpp"
#include "specdec/types.hpp"
#include "specdec/verify.hpp"
