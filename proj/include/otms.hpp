#ifndef OTMS_HPP_
#define OTMS_HPP_

#include "otms/core.hpp"
#include "otms/ot.hpp"
#include "otms/recovery.hpp"
#include "otms/baselines.hpp"
#include "otms/synthdata.hpp"
#include "otms/bench.hpp"
#include "otms/selftest.hpp"

#endif  // OTMS_HPP_
