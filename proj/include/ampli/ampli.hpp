#pragma once

#include "ampli/amp_sched.hpp"
#include "ampli/amp_select.hpp"
#include "ampli/config.hpp"
#include "ampli/data.hpp"
#include "ampli/error.hpp"
#include "ampli/grad_stats.hpp"
#include "ampli/nn.hpp"
#include "ampli/report_io.hpp"
#include "ampli/tensor.hpp"
#include "ampli/trainer.hpp"
