#pragma once

#include <string>

namespace catbench {

/// One judge reply as received, before validation.
struct RawResponse {
    std::string text;
    int attempt = 1;  ///< 1-based
    std::string judge_id;
    std::string request_fingerprint;
};

}  // namespace catbench
