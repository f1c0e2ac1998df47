#pragma once

#include "qrir/bits.hpp"
#include "qrir/rng.hpp"
#include "qrir/math.hpp"
#include "qrir/crc32.hpp"
#include "qrir/ldpc.hpp"
#include "qrir/decoder.hpp"
#include "qrir/adapt.hpp"
#include "qrir/messages.hpp"
#include "qrir/transport.hpp"
#include "qrir/frame.hpp"
#include "qrir/simchannel.hpp"
#include "qrir/metrics.hpp"
#include "qrir/session.hpp"
#include "qrir/config.hpp"
#include "qrir/runner.hpp"
