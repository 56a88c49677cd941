#include "rewardloop/prompts.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "rewardloop/builtin_templates.hpp"

namespace rewardloop {
namespace {

using Slots = std::map<std::string, std::string, std::less<>>;
using Sections = std::map<std::string, std::vector<Slots>, std::less<>>;

constexpr std::string_view kVersionPrefix = "%% template-version:";

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Splits off the version header. Throws ConfigError if it is missing.
std::pair<std::string, std::string> split_version(std::string_view text, const char* which) {
  if (!text.starts_with(kVersionPrefix)) {
    throw ConfigError(std::string(which) + " template: first line must be '" + std::string(kVersionPrefix) +
                      " <tag>'");
  }
  const auto eol = text.find('\n');
  const auto header = text.substr(0, eol);
  std::string version{trim(header.substr(kVersionPrefix.size()))};
  if (version.empty()) throw ConfigError(std::string(which) + " template: empty version tag");
  std::string body{eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1)};
  return {version, body};
}

void substitute(std::string_view tpl, const Slots& slots, std::string& out) {
  std::size_t pos = 0;
  while (true) {
    const auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      return;
    }
    out.append(tpl.substr(pos, open - pos));
    const auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw ConfigError("template: unterminated '{{'");
    const auto name = trim(tpl.substr(open + 2, close - open - 2));
    const auto it = slots.find(name);
    if (it == slots.end()) throw ConfigError("template: unknown slot '" + std::string(name) + "'");
    out.append(it->second);
    pos = close + 2;
  }
}

std::string render(std::string_view tpl, const Slots& slots, const Sections& sections) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = tpl.find("{{#", pos);
    if (open == std::string_view::npos) {
      substitute(tpl.substr(pos), slots, out);
      break;
    }
    substitute(tpl.substr(pos, open - pos), slots, out);
    const auto close = tpl.find("}}", open);
    if (close == std::string_view::npos) throw ConfigError("template: unterminated section tag");
    const std::string name{trim(tpl.substr(open + 3, close - open - 3))};
    const std::string end_tag = "{{/" + name + "}}";
    const auto end = tpl.find(end_tag, close + 2);
    if (end == std::string_view::npos) throw ConfigError("template: section '" + name + "' is not closed");
    auto body = tpl.substr(close + 2, end - close - 2);
    if (body.starts_with('\n')) body.remove_prefix(1);
    const auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError("template: unknown section '" + name + "'");
    for (const auto& item : it->second) {
      Slots merged = slots;
      for (const auto& [k, v] : item) merged[k] = v;
      substitute(body, merged, out);
    }
    pos = end + end_tag.size();
  }
  if (out.find("{{") != std::string::npos) throw ConfigError("template: unresolved placeholder in output");
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot read template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void PromptContext::validate() const {
  if (user_goal.find("{{") != std::string::npos || environment.find("{{") != std::string::npos) {
    throw ConfigError("prompt context: goal and environment text must not contain '{{'");
  }
  if (seed_count <= 0) throw ConfigError("prompt context: seed_count must be positive");
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].iteration < 0) throw ConfigError("prompt context: negative iteration index");
    if (i > 0 && history[i].iteration < history[i - 1].iteration) {
      throw ConfigError("prompt context: history is not ordered by iteration");
    }
  }
}

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates t;
  std::string v1, v2;
  std::tie(v1, t.initial) = split_version(builtin::kInitialTemplate, "initial");
  std::tie(v2, t.feedback) = split_version(builtin::kFeedbackTemplate, "feedback");
  if (v1 != v2) throw ConfigError("built-in templates disagree on their version tag");
  t.version = v1;
  return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t;
  std::string v1, v2;
  std::tie(v1, t.initial) = split_version(read_file(dir / "initial.txt"), "initial");
  std::tie(v2, t.feedback) = split_version(read_file(dir / "feedback.txt"), "feedback");
  if (v1 != v2) throw ConfigError("templates in " + dir.string() + " disagree on their version tag");
  t.version = v1;
  return t;
}

std::string render_initial(const PromptContext& ctx, const PromptTemplates& tpl) {
  ctx.validate();
  if (!ctx.history.empty()) throw ConfigError("render_initial: history must be empty");
  const Slots slots{{"user_goal", ctx.user_goal},
                    {"environment", ctx.environment},
                    {"placeholder_file", serialize_weight_file(kPlaceholderWeights)}};
  return render(tpl.initial, slots, {});
}

std::string render_feedback(const PromptContext& ctx, const PromptTemplates& tpl) {
  ctx.validate();
  if (ctx.history.empty()) throw ConfigError("render_feedback: history is empty");
  const Slots slots{{"user_goal", ctx.user_goal},
                    {"environment", ctx.environment},
                    {"seed_count", std::to_string(ctx.seed_count)}};
  std::vector<Slots> items;
  for (const auto& h : ctx.history) {
    items.push_back({{"iteration", std::to_string(h.iteration + 1)},
                     {"reward_line", serialize_weight_file(h.weights)},
                     {"stats_block", h.stats_block}});
  }
  return render(tpl.feedback, slots, {{"history", items}});
}

std::string render_prompt(const PromptContext& ctx, const PromptTemplates& tpl) {
  return ctx.history.empty() ? render_initial(ctx, tpl) : render_feedback(ctx, tpl);
}

ExtractedWeights extract_weights(std::string_view reply) {
  std::string_view found;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto eol = reply.find('\n', pos);
    if (eol == std::string_view::npos) eol = reply.size();
    auto line = trim(reply.substr(pos, eol - pos));
    while (!line.empty() && line.front() == '`') line.remove_prefix(1);
    while (!line.empty() && line.back() == '`') line.remove_suffix(1);
    line = trim(line);
    if (line.starts_with("reward") && trim(line.substr(6)).starts_with('=')) found = line;
    pos = eol + 1;
  }
  if (found.empty()) throw ExtractionError("reply contains no 'reward = ...' line", std::string(reply));
  try {
    return {parse_weight_file(found), std::string(found)};
  } catch (const ConfigError& e) {
    throw ExtractionError(std::string("reply weight line is malformed: ") + e.what(), std::string(reply));
  }
}

}  // namespace rewardloop
