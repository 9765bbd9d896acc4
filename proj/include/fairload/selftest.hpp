#pragma once

#include <string>
#include <vector>

namespace fairload::selftest {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

CheckResult check_kl_closed_forms();
CheckResult check_loss_additivity();
// Central finite differences against the analytic gradients of the three
// loss components on a reduced double-precision architecture.
CheckResult check_gradient_oracle();
CheckResult check_filter_oracle();
CheckResult check_metric_oracle();

// The four numeric oracle suites above, in order.
std::vector<CheckResult> run_all();

}  // namespace fairload::selftest
