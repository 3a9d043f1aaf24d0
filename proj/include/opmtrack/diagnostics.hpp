#pragma once

#include <functional>
#include <string_view>

namespace opmtrack {

using WarningHandler = std::function<void(std::string_view)>;

/// Replaces the process-wide warning sink. The default writes to std::clog.
/// Passing an empty handler silences warnings.
void set_warning_handler(WarningHandler handler);

void warn(std::string_view message);

}  // namespace opmtrack
