// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>

#include "drug_insights/errors.hpp"

namespace drug_insights {

struct RetryPolicy {
    int max_attempts = 4;
    int backoff_base_ms = 250;
};

/// 0 (no response), 408, 429 and 5xx are transient; everything else is final.
constexpr bool is_retryable_status(int status) {
    return status == 0 || status == 408 || status == 429 || status >= 500;
}

/// Full-jitter exponential backoff: uniform in [0, base * 2^retry] milliseconds.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry);

void sleep_for_backoff(const RetryPolicy& policy, int retry);

/// Runs `attempt` until it returns, throws a non-retryable ProviderError, or
/// max_attempts is reached. The last ProviderError is rethrown.
template <class F>
auto with_retry(const RetryPolicy& policy, F&& attempt) -> decltype(attempt()) {
    for (int i = 0;; ++i) {
        try {
            return attempt();
        } catch (const ProviderError& e) {
            if (!is_retryable_status(e.status()) || i + 1 >= policy.max_attempts) throw;
            sleep_for_backoff(policy, i);
        }
    }
}

}  // namespace drug_insights
