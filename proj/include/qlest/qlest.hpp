/*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*/
#pragma once

#include "qlest/active_set_qp.hpp"
#include "qlest/assignment.hpp"
#include "qlest/config.hpp"
#include "qlest/csv.hpp"
#include "qlest/error.hpp"
#include "qlest/estimators.hpp"
#include "qlest/experiment.hpp"
#include "qlest/nlane.hpp"
#include "qlest/pipeline.hpp"
#include "qlest/queue_dist.hpp"
#include "qlest/rng.hpp"
#include "qlest/simulation.hpp"
#include "qlest/trace_io.hpp"
