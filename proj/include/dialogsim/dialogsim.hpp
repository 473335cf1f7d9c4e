#pragma once

#include "dialogsim/acts.hpp"
#include "dialogsim/config.hpp"
#include "dialogsim/engine.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/goals.hpp"
#include "dialogsim/markup.hpp"
#include "dialogsim/metrics.hpp"
#include "dialogsim/nlg.hpp"
#include "dialogsim/rng.hpp"
#include "dialogsim/schema.hpp"
#include "dialogsim/system_agent.hpp"
#include "dialogsim/text.hpp"
#include "dialogsim/training_export.hpp"
#include "dialogsim/user_agent.hpp"
