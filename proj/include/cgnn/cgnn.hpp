#pragma once

#include "cgnn/augmentation.hpp"
#include "cgnn/checkpoint.hpp"
#include "cgnn/config.hpp"
#include "cgnn/correction.hpp"
#include "cgnn/encoder.hpp"
#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/io.hpp"
#include "cgnn/matrix.hpp"
#include "cgnn/noise.hpp"
#include "cgnn/objectives.hpp"
#include "cgnn/report.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tensor.hpp"
#include "cgnn/trainer.hpp"
