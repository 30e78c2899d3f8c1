#pragma once

#include "ddmqkd/config.hpp"
#include "ddmqkd/ddm_core.hpp"
#include "ddmqkd/error.hpp"
#include "ddmqkd/experiments.hpp"
#include "ddmqkd/keyrate.hpp"
#include "ddmqkd/link_channel.hpp"
#include "ddmqkd/random.hpp"
#include "ddmqkd/receiver_sim.hpp"
#include "ddmqkd/sift_estimate.hpp"
#include "ddmqkd/waveform_codec.hpp"
