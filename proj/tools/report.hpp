#pragma once

#include <json.hpp>

#include <span>

#include "qkdsim/channel.hpp"
#include "qkdsim/emitter.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/scenario.hpp"

namespace qkdsim::report {

using nlohmann::json;

json device_json(const DeviceParams& d);
json security_json(const SecurityParams& s);
json tally_json(const KeyTally& t);
json key_result_json(const KeyResult& r);
json session_json(const Scenario& sc, const SessionResult& session, const ExpectedRates& expected, std::uint64_t seed);
json arc_fit_json(const ArcFit& fit, std::span<const TrajectoryPoint> points);
json g2_fit_json(const G2Fit& fit);
json pulsed_g2_json(const PulsedG2& g2);
json optimize_json(const OptimizeResult& r, double duration_s);

/// Reads named device fields into a device description; absent fields keep defaults.
DeviceParams device_from_json(const json& j, double* channel_loss_db = nullptr);
SecurityParams security_from_json(const json& j);

}  // namespace qkdsim::report
