#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajsim/behavior.hpp"
#include "trajsim/corpus.hpp"

namespace trajsim {

// vanilla: profile only; behavior: + trajectory labels; content: + exemplar;
// full: labels and exemplar together.
enum class PromptSetting { kVanilla, kBehavior, kContent, kFull };

inline constexpr std::array<PromptSetting, 4> kAllSettings = {
    PromptSetting::kVanilla, PromptSetting::kBehavior, PromptSetting::kContent,
    PromptSetting::kFull};

std::string_view setting_name(PromptSetting setting);
PromptSetting parse_setting(std::string_view name);

bool uses_behavior(PromptSetting setting);
bool uses_content(PromptSetting setting);

struct HistoryTurn {
  Speaker role = Speaker::kCounselor;
  std::string text;
};

// One `prefix + text` line per turn ("咨询师：" / "来访者：" for zh,
// "Counselor: " / "Client: " for en). With `max_chars`, the oldest turns are
// dropped whole until the rendered history fits.
std::string render_history(const std::vector<HistoryTurn>& turns, Locale locale,
                           std::optional<std::size_t> max_chars = std::nullopt);

struct PromptRequest {
  PromptSetting setting = PromptSetting::kVanilla;
  Locale locale = Locale::kZh;
  std::string profile_text;
  std::string history;
  std::optional<BehaviorSet> behavior_set;
  std::optional<std::string> exemplar;
  std::optional<std::size_t> n;
};

// Reads one resource file, dropping a single trailing newline.
std::string load_template_file(const std::filesystem::path& path);

/// The eight client-simulation templates, `<setting>.<locale>.txt`.
class TemplateSet {
 public:
  static TemplateSet load(const std::filesystem::path& dir);

  const std::string& get(PromptSetting setting, Locale locale) const;
  // Short SHA-256 over all eight templates; recorded in session logs.
  const std::string& version() const { return version_; }

 private:
  std::map<std::pair<PromptSetting, Locale>, std::string> templates_;
  std::string version_;
};

// Replaces known `{field}` placeholders in one left-to-right pass; values are
// never rescanned, so a profile containing "{n}" is left as written.
std::string interpolate(std::string_view tmpl,
                        const std::map<std::string, std::string, std::less<>>& fields);

class PromptComposer {
 public:
  explicit PromptComposer(TemplateSet templates) : templates_(std::move(templates)) {}

  // Throws MissingField when the setting needs a field the request lacks and
  // InvalidArgument when it carries one the setting forbids.
  std::string compose(const PromptRequest& request) const;

  const std::string& template_version() const { return templates_.version(); }
  const TemplateSet& templates() const { return templates_; }

 private:
  TemplateSet templates_;
};

}  // namespace trajsim
