#pragma once

#include "pktimg/byteio.hpp"
#include "pktimg/cnn.hpp"
#include "pktimg/craft.hpp"
#include "pktimg/csv.hpp"
#include "pktimg/dataset.hpp"
#include "pktimg/encoders.hpp"
#include "pktimg/error.hpp"
#include "pktimg/experiment.hpp"
#include "pktimg/layers.hpp"
#include "pktimg/packet.hpp"
#include "pktimg/pcap.hpp"
#include "pktimg/rng.hpp"
#include "pktimg/stats.hpp"
#include "pktimg/synth.hpp"
#include "pktimg/workflow.hpp"
