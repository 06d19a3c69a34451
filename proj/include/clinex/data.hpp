#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>

/// Versioned data files (schemas, templates, canonicalization tables, fixture
/// corpora) compiled into the library from the repository's data/ directory.
namespace clinex::data {

const std::map<std::string, std::string_view, std::less<>>& files();

/// Contents of data/<path>; throws clinex::Error when absent.
std::string_view file(std::string_view path);

}  // namespace clinex::data
