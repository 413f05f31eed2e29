#pragma once

#include "archpred/errors.hpp"
#include "archpred/tensor.hpp"
#include "archpred/random.hpp"
#include "archpred/autograd.hpp"
#include "archpred/optim.hpp"
#include "archpred/gradcheck.hpp"
#include "archpred/graph.hpp"
#include "archpred/language.hpp"
#include "archpred/encoder.hpp"
#include "archpred/dgsa.hpp"
#include "archpred/model.hpp"
#include "archpred/metrics.hpp"
#include "archpred/dataset.hpp"
#include "archpred/synthetic.hpp"
#include "archpred/train.hpp"
