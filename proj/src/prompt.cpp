#include "trajsim/prompt.hpp"

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

std::string_view setting_name(PromptSetting setting) {
  switch (setting) {
    case PromptSetting::kVanilla: return "vanilla";
    case PromptSetting::kBehavior: return "behavior";
    case PromptSetting::kContent: return "content";
    case PromptSetting::kFull: return "full";
  }
  return "unknown";
}

PromptSetting parse_setting(std::string_view name) {
  auto n = text::to_lower_ascii(text::trim(name));
  if (!n.empty() && n.front() == '+') n.erase(0, 1);
  if (n == "vanilla") return PromptSetting::kVanilla;
  if (n == "behavior") return PromptSetting::kBehavior;
  if (n == "content") return PromptSetting::kContent;
  if (n == "full") return PromptSetting::kFull;
  throw Error(Errc::kUnknownSetting, "unknown prompt setting: " + std::string(name));
}

bool uses_behavior(PromptSetting setting) {
  return setting == PromptSetting::kBehavior || setting == PromptSetting::kFull;
}

bool uses_content(PromptSetting setting) {
  return setting == PromptSetting::kContent || setting == PromptSetting::kFull;
}

std::string render_history(const std::vector<HistoryTurn>& turns, Locale locale,
                           std::optional<std::size_t> max_chars) {
  const std::string_view counselor = locale == Locale::kZh ? "咨询师：" : "Counselor: ";
  const std::string_view client = locale == Locale::kZh ? "来访者：" : "Client: ";
  std::vector<std::string> lines;
  lines.reserve(turns.size());
  for (const auto& t : turns) {
    lines.push_back(std::string(t.role == Speaker::kCounselor ? counselor : client) + t.text);
  }
  if (max_chars) {
    std::size_t total = 0;
    for (const auto& l : lines) total += text::codepoint_count(l) + 1;
    if (!lines.empty()) total -= 1;
    std::size_t first = 0;
    while (first < lines.size() && total > *max_chars) {
      total -= text::codepoint_count(lines[first]) + (first + 1 < lines.size() ? 1 : 0);
      ++first;
    }
    lines.erase(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(first));
  }
  return text::join(lines, "\n");
}

std::string load_template_file(const std::filesystem::path& path) {
  auto content = text::read_file(path);
  if (text::ends_with(content, "\n")) content.pop_back();
  return content;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet set;
  std::string digest_input;
  for (auto setting : kAllSettings) {
    for (auto locale : {Locale::kZh, Locale::kEn}) {
      const auto name = std::string(setting_name(setting)) + "." +
                        std::string(locale_name(locale)) + ".txt";
      auto body = load_template_file(dir / name);
      digest_input += name;
      digest_input.push_back('\0');
      digest_input += body;
      digest_input.push_back('\0');
      set.templates_.emplace(std::make_pair(setting, locale), std::move(body));
    }
  }
  set.version_ = text::sha256_hex(digest_input).substr(0, 16);
  return set;
}

const std::string& TemplateSet::get(PromptSetting setting, Locale locale) const {
  return templates_.at({setting, locale});
}

std::string interpolate(std::string_view tmpl,
                        const std::map<std::string, std::string, std::less<>>& fields) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = fields.find(tmpl.substr(i + 1, close - i - 1));
        if (it != fields.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::string PromptComposer::compose(const PromptRequest& request) const {
  const auto setting = request.setting;
  std::map<std::string, std::string, std::less<>> fields{
      {"client_profile", request.profile_text},
      {"dialogue_history", request.history}};

  if (uses_behavior(setting)) {
    if (!request.behavior_set || request.behavior_set->empty()) {
      throw Error(Errc::kMissingField, "behavior_set");
    }
    const auto n = request.behavior_set->sentence_count();
    if (request.n && *request.n != n) {
      throw Error(Errc::kInvalidArgument,
                  "n = " + std::to_string(*request.n) +
                      " does not match the behavior set's label count " + std::to_string(n));
    }
    fields["client_behaviors"] = request.behavior_set->display(request.locale);
    fields["n"] = std::to_string(n);
  } else if (request.behavior_set || request.n) {
    throw Error(Errc::kInvalidArgument, std::string(setting_name(setting)) +
                                            " prompts take no behavior set or n");
  }

  if (uses_content(setting)) {
    if (!request.exemplar) throw Error(Errc::kMissingField, "exemplar");
    fields["utterance_content"] = *request.exemplar;
  } else if (request.exemplar) {
    throw Error(Errc::kInvalidArgument,
                std::string(setting_name(setting)) + " prompts take no exemplar");
  }

  return interpolate(templates_.get(setting, request.locale), fields);
}

}  // namespace trajsim
