#pragma once

#include "ssirus/common.hpp"
#include "ssirus/cv.hpp"
#include "ssirus/dataset.hpp"
#include "ssirus/forest.hpp"
#include "ssirus/geo.hpp"
#include "ssirus/io.hpp"
#include "ssirus/kriging.hpp"
#include "ssirus/log.hpp"
#include "ssirus/optim.hpp"
#include "ssirus/pipeline.hpp"
#include "ssirus/predict.hpp"
#include "ssirus/ridge.hpp"
#include "ssirus/rules.hpp"
#include "ssirus/serialize.hpp"
#include "ssirus/simbench.hpp"
