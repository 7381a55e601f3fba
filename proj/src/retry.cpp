// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/retry.hpp"

#include <algorithm>
#include <random>
#include <thread>

namespace drug_insights {

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry) {
    if (policy.backoff_base_ms <= 0) return std::chrono::milliseconds(0);
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const long long cap = static_cast<long long>(policy.backoff_base_ms) << std::clamp(retry, 0, 20);
    std::uniform_int_distribution<long long> jitter(0, cap);
    return std::chrono::milliseconds(jitter(rng));
}

void sleep_for_backoff(const RetryPolicy& policy, int retry) {
    auto delay = backoff_delay(policy, retry);
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
}

}  // namespace drug_insights
