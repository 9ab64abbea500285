#include "relpred/run_config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "relpred/errors.hpp"

namespace relpred {

namespace {

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
    --end;
  }
  return std::string(s.substr(begin, end - begin));
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no") {
    return false;
  }
  throw ConfigError("config key " + key + ": expected a boolean, got '" +
                    value + "'");
}

template <class T>
T parse_number(const std::string& value, const std::string& key) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(value, &used));
      if (used != value.size()) {
        throw std::invalid_argument(value);
      }
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected a number, got '" +
                        value + "'");
    }
  } else {
    const auto result =
        std::from_chars(value.data(), value.data() + value.size(), out);
    if (result.ec != std::errc{} || result.ptr != value.data() + value.size()) {
      throw ConfigError("config key " + key + ": expected an integer, got '" +
                        value + "'");
    }
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& value,
                                const std::string& key) {
  std::vector<int> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(parse_number<int>(item, key));
    }
  }
  if (out.empty()) {
    throw ConfigError("config key " + key + ": expected a list of integers");
  }
  return out;
}

void set_key(RunConfig& config, const std::string& key,
             const std::string& value) {
  if (key == "data.train") {
    config.train_path = value;
  } else if (key == "data.valid") {
    config.valid_path = value;
  } else if (key == "data.test") {
    config.test_path = value;
  } else if (key == "data.names") {
    config.names_path = value;
  } else if (key == "data.underscores_to_spaces") {
    config.underscores_to_spaces = parse_bool(value, key);
  } else if (key == "tokenizer.max_size") {
    config.vocab_max_size = parse_number<std::size_t>(value, key);
  } else if (key == "tokenizer.pad_len") {
    config.pad_len = parse_number<std::size_t>(value, key);
  } else if (key == "tokenizer.vocab") {
    config.vocab_path = value;
  } else if (key == "model.embed_dim") {
    config.embed_dim = parse_number<std::uint32_t>(value, key);
  } else if (key == "model.num_layers") {
    config.num_layers = parse_number<std::uint32_t>(value, key);
  } else if (key == "model.num_heads") {
    config.num_heads = parse_number<std::uint32_t>(value, key);
  } else if (key == "model.feedforward_dim") {
    config.feedforward_dim = parse_number<std::uint32_t>(value, key);
  } else if (key == "model.dropout") {
    config.dropout = parse_number<double>(value, key);
  } else if (key == "train.learning_rate") {
    config.train.learning_rate = parse_number<double>(value, key);
  } else if (key == "train.weight_decay") {
    config.train.weight_decay = parse_number<double>(value, key);
  } else if (key == "train.decay_mode") {
    if (value == "weight") {
      config.train.decay_mode = DecayMode::weight;
    } else if (value == "lr") {
      config.train.decay_mode = DecayMode::lr;
    } else {
      throw ConfigError("train.decay_mode must be 'weight' or 'lr'");
    }
  } else if (key == "train.epochs") {
    config.train.epochs = parse_number<int>(value, key);
  } else if (key == "train.batch_size") {
    config.train.batch_size = parse_number<int>(value, key);
  } else if (key == "train.eval_every") {
    config.train.eval_every = parse_number<int>(value, key);
  } else if (key == "train.clip_norm") {
    config.train.clip_norm = parse_number<double>(value, key);
  } else if (key == "train.multi_label_targets") {
    config.train.multi_label_targets = parse_bool(value, key);
  } else if (key == "train.threads") {
    config.train.threads = parse_number<int>(value, key);
  } else if (key == "eval.hits") {
    config.hits_levels = parse_int_list(value, key);
  } else if (key == "eval.tie_policy") {
    config.tie_policy = value;
  } else if (key == "inductive.fraction") {
    config.fraction = parse_number<double>(value, key);
  } else if (key == "run.seed") {
    config.seed = parse_number<std::uint64_t>(value, key);
  } else if (key == "run.out") {
    config.out_dir = value;
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  RunConfig config;
  std::string line;
  std::string section;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto comment = line.find('#');
    if (comment != std::string::npos) {
      line.erase(comment);
    }
    const std::string text = trim(line);
    if (text.empty()) {
      continue;
    }
    if (text.front() == '[' && text.back() == ']') {
      section = trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                        ": expected key = value");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_number) +
                        ": key outside any [section]");
    }
    set_key(config, section + "." + key, value);
  }
  return config;
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must look like section.key=value, got '" +
                      assignment + "'");
  }
  set_key(config, trim(assignment.substr(0, eq)),
          trim(assignment.substr(eq + 1)));
}

std::string config_snapshot(const RunConfig& config) {
  std::ostringstream out;
  out << "[data]\n"
      << "train = " << config.train_path << '\n'
      << "valid = " << config.valid_path << '\n'
      << "test = " << config.test_path << '\n'
      << "names = " << config.names_path << '\n'
      << "underscores_to_spaces = "
      << (config.underscores_to_spaces ? "true" : "false") << '\n'
      << "\n[tokenizer]\n"
      << "max_size = " << config.vocab_max_size << '\n'
      << "pad_len = " << config.pad_len << '\n';
  if (!config.vocab_path.empty()) {
    out << "vocab = " << config.vocab_path << '\n';
  }
  out << "\n[model]\n"
      << "embed_dim = " << config.embed_dim << '\n'
      << "num_layers = " << config.num_layers << '\n'
      << "num_heads = " << config.num_heads << '\n'
      << "feedforward_dim = " << config.feedforward_dim << '\n'
      << "dropout = " << config.dropout << '\n'
      << "\n[train]\n"
      << "learning_rate = " << config.train.learning_rate << '\n'
      << "weight_decay = " << config.train.weight_decay << '\n'
      << "decay_mode = "
      << (config.train.decay_mode == DecayMode::weight ? "weight" : "lr")
      << '\n'
      << "epochs = " << config.train.epochs << '\n'
      << "batch_size = " << config.train.batch_size << '\n'
      << "eval_every = " << config.train.eval_every << '\n'
      << "clip_norm = " << config.train.clip_norm << '\n'
      << "multi_label_targets = "
      << (config.train.multi_label_targets ? "true" : "false") << '\n'
      << "threads = " << config.train.threads << '\n'
      << "\n[eval]\n"
      << "hits = ";
  for (std::size_t i = 0; i < config.hits_levels.size(); ++i) {
    out << (i ? "," : "") << config.hits_levels[i];
  }
  out << '\n'
      << "tie_policy = " << config.tie_policy << '\n'
      << "\n[inductive]\n"
      << "fraction = " << config.fraction << '\n'
      << "\n[run]\n"
      << "seed = " << config.seed << '\n'
      << "out = " << config.out_dir << '\n';
  return out.str();
}

}  // namespace relpred
