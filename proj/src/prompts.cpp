#include "pfv/prompts.hpp"

#include "pfv/error.hpp"
#include "pfv/util.hpp"

namespace pfv::detail {
const std::map<std::string, std::string>& prompt_assets();
}

namespace pfv::prompts {

namespace {

const std::map<std::string, std::string, std::less<>>& trimmed_assets() {
  static const auto assets = [] {
    std::map<std::string, std::string, std::less<>> out;
    for (const auto& [name, text] : detail::prompt_assets()) {
      auto t = std::string_view(text);
      while (!t.empty() && (t.back() == '\n' || t.back() == ' ' || t.back() == '\r')) t.remove_suffix(1);
      out.emplace(name, std::string(t));
    }
    return out;
  }();
  return assets;
}

}  // namespace

const std::string& get(std::string_view name) {
  const auto& assets = trimmed_assets();
  auto it = assets.find(name);
  if (it == assets.end()) throw Error(Errc::ConfigError, "unknown prompt template " + std::string(name));
  return it->second;
}

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : trimmed_assets()) out.push_back(name);
  return out;
}

std::string render(std::string_view text, const Values& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find('{', pos);
    if (open == std::string_view::npos) break;
    auto close = text.find('}', open + 1);
    if (close == std::string_view::npos) break;
    auto it = values.find(text.substr(open + 1, close - open - 1));
    if (it == values.end()) {
      out.append(text.substr(pos, open + 1 - pos));
      pos = open + 1;
      continue;
    }
    out.append(text.substr(pos, open - pos));
    out += it->second;
    pos = close + 1;
  }
  out.append(text.substr(pos));
  return out;
}

}  // namespace pfv::prompts
