#pragma once

#include <string>
#include <string_view>

namespace limes {

/// Random (version 4) UUID in canonical lowercase 8-4-4-4-12 form.
std::string random_uuid();
bool is_uuid(std::string_view text);

} // namespace limes
