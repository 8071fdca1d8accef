#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "offload/rng.hpp"
#include "offload/system_model.hpp"

namespace testutil {

inline bool rel_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300);
}

/// Random but physically plausible state with `servers` servers.
inline offload::SystemState random_state(offload::Rng& rng, int servers) {
    offload::SystemState s;
    s.task.size_bits = rng.uniform(1e6, 10e6);
    s.task.user = 0;
    s.device.local_freq_hz = 2e9;
    s.device.local_backlog_bits = rng.bernoulli(0.5) ? rng.uniform(0.0, 5e6) : 0.0;
    for (int e = 0; e < servers; ++e) {
        offload::ServerState srv;
        srv.id = e + 1;
        srv.capacity_hz = rng.uniform(20e9, 48e9);
        srv.active_tasks = static_cast<int>(rng.index(5));
        srv.backlog_bits = srv.active_tasks > 0 ? rng.uniform(0.0, 20e6) : 0.0;
        for (int h = 0; h < 5; ++h) srv.history.push_back(rng.uniform(0.0, 20e6));
        s.servers.push_back(srv);
        s.uplink_rates_bps.push_back(rng.uniform(7e6, 21e6));
    }
    return s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("offload_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
