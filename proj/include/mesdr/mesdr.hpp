#pragma once

// Umbrella header.

#include "mesdr/audio_io.hpp"
#include "mesdr/compressor.hpp"
#include "mesdr/error.hpp"
#include "mesdr/parallel.hpp"
#include "mesdr/power_metrics.hpp"
#include "mesdr/serialize.hpp"
#include "mesdr/signal.hpp"
#include "mesdr/smoother.hpp"
#include "mesdr/subsampler.hpp"
