#ifndef STMFG_STMFG_HPP
#define STMFG_STMFG_HPP

#include "stmfg/checkpoint.hpp"
#include "stmfg/cluster.hpp"
#include "stmfg/data.hpp"
#include "stmfg/errors.hpp"
#include "stmfg/graph.hpp"
#include "stmfg/losses.hpp"
#include "stmfg/model.hpp"
#include "stmfg/optim.hpp"
#include "stmfg/pipeline.hpp"
#include "stmfg/sparse.hpp"
#include "stmfg/special.hpp"
#include "stmfg/tensor.hpp"
#include "stmfg/trainer.hpp"

#define STMFG_VERSION "0.1.0"

#endif  // STMFG_STMFG_HPP
