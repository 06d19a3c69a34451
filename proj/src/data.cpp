#include "clinex/data.hpp"

#include "clinex/common.hpp"

namespace clinex::data {

std::string_view file(std::string_view path) {
  const auto& table = files();
  auto it = table.find(path);
  if (it == table.end()) throw Error("no embedded data file '" + std::string(path) + "'");
  return it->second;
}

}  // namespace clinex::data
