#pragma once

#include <string_view>

namespace charmem::bundled {

std::string_view templates_json();
std::string_view cross_cultural_pool_json();
std::string_view same_cultural_pool_json();

}  // namespace charmem::bundled
