// lrhp: one subcommand per pipeline stage. Every run writes its artifacts and
// a manifest.json into --output-dir; failures print a JSON error record on
// stderr and exit with the category's code.

#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "lrhp/align_eval.hpp"
#include "lrhp/corpus.hpp"
#include "lrhp/encoder.hpp"
#include "lrhp/pds.hpp"
#include "lrhp/pmp.hpp"
#include "lrhp/probe.hpp"
#include "lrhp/trainer.hpp"
#include "lrhp/util.hpp"
#include "run.hpp"

namespace lrhp::cli {
namespace {

constexpr int kUsageExit = 2;
constexpr int kInternalExit = 1;

struct Globals {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int threads = 1;
};

struct ModelOpts {
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_seq_len = 64;
  std::string mode = "special_token";

  void add(OptionSet& o) {
    o.add("d-model", d_model, "hidden width");
    o.add("layers", n_layers, "transformer blocks");
    o.add("heads", n_heads, "attention heads");
    o.add("ffn-mult", ffn_mult, "MLP width multiplier");
    o.add("max-seq-len", max_seq_len, "longest token sequence");
    o.add("mode", mode, "representation mode: special_token, eos_token or ntp");
  }
  EncoderConfig config(std::uint64_t seed) const {
    EncoderConfig c;
    c.d_model = d_model;
    c.n_layers = n_layers;
    c.n_heads = n_heads;
    c.ffn_mult = ffn_mult;
    c.max_seq_len = max_seq_len;
    c.representation_mode = parse_mode(mode);
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct TrainOpts {
  double lr = 1e-3;
  int batch_size = 16;
  int steps = 500;
  int eval_every = 100;

  void add(OptionSet& o, const std::string& prefix = "") {
    o.add(prefix + "lr", lr, "learning rate");
    o.add(prefix + "batch-size", batch_size, "minibatch size");
    o.add(prefix + "steps", steps, "optimizer steps");
    o.add(prefix + "eval-every", eval_every, "evaluation interval in steps (0: end only)");
  }
  TrainConfig config(std::uint64_t seed, int threads) const {
    TrainConfig c;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.max_steps = steps;
    c.eval_every = eval_every;
    c.seed = seed;
    c.threads = threads;
    return c;
  }
};

/// A registered subcommand: its option set and the work it performs.
struct Command {
  std::unique_ptr<OptionSet> options;
  std::function<void(Run&)> body;
};

class Registry {
 public:
  Registry(CLI::App& app, const Globals& globals) : app_(app), globals_(globals) {}

  OptionSet& add(const std::string& name, const std::string& help, std::function<void(Run&)> body) {
    CLI::App* sub = app_.add_subcommand(name, help);
    auto& cmd = commands_[name];
    cmd.options = std::make_unique<OptionSet>(sub);
    cmd.body = std::move(body);
    return *cmd.options;
  }

  /// Runs the parsed subcommand inside a manifest-writing Run.
  void dispatch() const {
    for (const auto& [name, cmd] : commands_) {
      if (!cmd.options->app()->parsed()) continue;
      json config = cmd.options->values();
      config["seed"] = globals_.seed;
      Run run(name, globals_.output_dir, std::move(config));
      cmd.body(run);
      run.finish();
      return;
    }
  }

 private:
  CLI::App& app_;
  const Globals& globals_;
  std::map<std::string, Command> commands_;
};

Model load_model(Run& run, const std::string& role, const std::string& path) {
  return load_checkpoint(run.input(role, path)).model;
}

std::vector<PreferencePair> load_data(Run& run, const std::string& role, const std::string& path) {
  return load_pairs(run.input(role, path));
}

std::vector<json> load_jsonl(Run& run, const std::string& role, const std::string& path) {
  std::istringstream in(read_file(run.input(role, path)));
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorCategory::parse, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

template <typename T>
T field(const json& row, const char* key, const std::string& origin) {
  try {
    return row.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCategory::validation, origin + ": missing or malformed field '" + key + "'");
  }
}

/// Generated text is an arbitrary byte string. JSONL files carry it with each
/// byte mapped to the code point of the same value, which round-trips exactly.
std::string bytes_to_text(std::string_view bytes) {
  std::string out;
  for (unsigned char c : bytes) {
    if (c < 0x80) {
      out += static_cast<char>(c);
    } else {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

std::string text_to_bytes(std::string_view text, const std::string& origin) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      out += static_cast<char>(c);
      continue;
    }
    if ((c & 0xFE) != 0xC2 || i + 1 >= text.size())
      fail(ErrorCategory::validation, origin + ": text holds a character outside U+0000..U+00FF");
    out += static_cast<char>(((c & 0x03) << 6) | (static_cast<unsigned char>(text[++i]) & 0x3F));
  }
  return out;
}

std::string checkpoint_bytes(const Model& m) { return serialize_checkpoint(m); }

/// Per-prompt sampler seed; independent of where the prompt sits in the file.
std::uint64_t prompt_seed(std::uint64_t seed, const std::string& id) {
  Fnv1a h;
  h.update(&seed, sizeof seed);
  h.update(id);
  return h.value();
}

void register_commands(Registry& reg, const Globals& g) {
  {
    auto spec = std::make_shared<SynthSpec>();
    auto margin_rule = std::make_shared<std::string>("gap");
    auto split_ratio = std::make_shared<double>(0.0);
    auto& o = reg.add("synth", "generate the planted synthetic preference corpus", [=, &g](Run& run) {
      SynthSpec s = *spec;
      s.seed = g.seed;
      if (*margin_rule == "gap") s.margin_rule = MarginRule::gap;
      else if (*margin_rule == "none") s.margin_rule = MarginRule::none;
      else fail(ErrorCategory::invalid_request, "unknown margin rule '" + *margin_rule + "'");
      const auto pairs = synth_generate(s);
      run.artifact("pairs.jsonl", to_jsonl(pairs));
      if (*split_ratio > 0.0) {
        const auto [train, held_out] = split(pairs, *split_ratio, g.seed);
        run.artifact("train.jsonl", to_jsonl(train));
        run.artifact("heldout.jsonl", to_jsonl(held_out));
      }
    });
    o.add("n-pairs", spec->n_pairs, "number of pairs");
    o.add("n-pref-types", spec->n_pref_types, "preference types");
    o.add("n-tasks", spec->n_tasks, "task tags");
    o.add("signal-strength", spec->vocab_signal_strength, "probability that a label follows the planted rule");
    o.add("margin-rule", *margin_rule, "gap or none");
    o.add("source", spec->source, "source tag");
    o.add("id-prefix", spec->id_prefix, "pair id prefix");
    o.add("prompt-len", spec->prompt_len, "prompt length in bytes");
    o.add("response-len", spec->response_len, "response length in bytes");
    o.flag("cross-conflict", spec->cross_conflict, "rejected responses carry another type's markers");
    o.add("max-loser-markers", spec->max_loser_markers, "own markers allowed in the rejected response");
    o.flag("gap-noise", spec->gap_dependent_noise, "label reliability grows with the gap");
    o.add("split", *split_ratio, "also write train/heldout files with this train fraction (0 disables)");
  }
  {
    struct Opts {
      std::string data, held_out;
      ModelOpts model;
      TrainOpts train{.steps = 1000};
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("train-rep", "train the preference representation model", [p, &g](Run& run) {
      const auto train = balance_and_shuffle(load_data(run, "data", p->data), g.seed);
      std::vector<ClassifierExample> held;
      if (!p->held_out.empty()) held = balance_and_shuffle(load_data(run, "held_out", p->held_out), g.seed + 1);
      const auto result = train_representation(p->train.config(g.seed, g.threads), train, p->model.config(g.seed), held);
      run.artifact("model.ckpt", checkpoint_bytes(result.model));
      run.artifact("metrics.csv", result.log.to_csv());
    });
    o.add("data", p->data, "training pairs (JSONL)")->required();
    o.add("held-out", p->held_out, "held-out pairs (JSONL)");
    p->model.add(o);
    p->train.add(o);
  }
  {
    struct Opts {
      std::string model, data, format = "csv";
      int layer = 0;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("encode", "extract terminal-token representations", [p, &g](Run& run) {
      const Encoder encoder(load_model(run, "model", p->model));
      const auto pairs = load_data(run, "data", p->data);
      const auto reps = encoder.encode_batch(pairs, p->layer == 0 ? std::nullopt : std::optional<int>(p->layer), g.threads);
      if (p->format == "csv") run.artifact("representations.csv", representations_to_csv(reps));
      else if (p->format == "matrix") run.artifact("representations.bin", representations_to_matrix(reps));
      else fail(ErrorCategory::invalid_request, "unknown format '" + p->format + "'");
    });
    o.add("model", p->model, "representation checkpoint")->required();
    o.add("data", p->data, "pairs to encode (JSONL)")->required();
    o.add("layer", p->layer, "1-based layer (0: last)");
    o.add("format", p->format, "csv or matrix");
  }
  {
    struct Opts {
      std::string pool, anchors, method = "centroid";
      int k = 0;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("select", "score a pool against anchors and keep the top k", [p, &g](Run& run) {
      SelectionRequest req;
      req.pool = representations_from_csv(read_file(run.input("pool", p->pool)));
      req.anchors = representations_from_csv(read_file(run.input("anchors", p->anchors)));
      req.k = p->k;
      const auto report = parse_method(p->method) == ScoreMethod::direct ? score_pool(req, g.threads)
                                                                         : score_pool_centroid(req, g.threads);
      run.artifact("selection.csv", report_to_csv(report));
    });
    o.add("pool", p->pool, "pool representations (CSV)")->required();
    o.add("anchors", p->anchors, "anchor representations (CSV)")->required();
    o.add("k", p->k, "number of pool items to select")->required();
    o.add("method", p->method, "direct or centroid");
  }
  {
    struct Opts {
      std::string init, pretrain, selection, finetune, held_out;
      ModelOpts model;
      TrainOpts pre{.steps = 100}, fine{.steps = 100};
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("train-reward", "two-stage Bradley-Terry reward model training", [p, &g](Run& run) {
      Model init;
      if (p->init.empty()) {
        init = Model(p->model.config(g.seed), {Head::reward});
        init.initialize(g.seed);
      } else {
        init = load_model(run, "init", p->init);
      }
      TwoStageSchedule schedule;
      if (!p->pretrain.empty()) {
        schedule.pretrain.data = load_data(run, "pretrain", p->pretrain);
        if (!p->selection.empty()) {
          const auto report = report_from_csv(read_file(run.input("selection", p->selection)));
          const std::set<std::string> keep(report.selected_ids.begin(), report.selected_ids.end());
          std::erase_if(schedule.pretrain.data, [&](const PreferencePair& x) { return !keep.contains(x.id); });
          require(schedule.pretrain.data.size() == keep.size(), ErrorCategory::validation,
                  "train-reward: selection names pairs missing from the pretrain file");
        }
      } else {
        require(p->selection.empty(), ErrorCategory::invalid_request, "train-reward: --selection needs --pretrain");
      }
      if (!p->finetune.empty()) schedule.finetune.data = load_data(run, "finetune", p->finetune);
      schedule.pretrain.config = p->pre.config(g.seed, g.threads);
      schedule.finetune.config = p->fine.config(g.seed + 1, g.threads);
      std::vector<PreferencePair> held;
      if (!p->held_out.empty()) held = load_data(run, "held_out", p->held_out);
      const auto result = train_reward(schedule, init, held);
      run.artifact("reward.ckpt", checkpoint_bytes(result.model));
      run.artifact("metrics.csv", result.log.to_csv());
    });
    o.add("init", p->init, "initial checkpoint (default: fresh model)");
    o.add("pretrain", p->pretrain, "pretraining pool (JSONL)");
    o.add("selection", p->selection, "selection report restricting the pretraining pool");
    o.add("finetune", p->finetune, "preference-specific fine-tuning pairs (JSONL)");
    o.add("held-out", p->held_out, "held-out pairs (JSONL)");
    p->model.add(o);
    p->pre.add(o, "pretrain-");
    p->fine.add(o, "finetune-");
  }
  {
    struct Opts {
      std::string model, data;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("eval-reward", "held-out preference accuracy of a reward model", [p, &g](Run& run) {
      const Model m = load_model(run, "model", p->model);
      const auto pairs = load_data(run, "data", p->data);
      const json out = {{"accuracy", preference_accuracy(m, pairs, g.threads)}, {"pairs", pairs.size()}};
      run.artifact("accuracy.json", out.dump(2) + "\n");
    });
    o.add("model", p->model, "reward checkpoint")->required();
    o.add("data", p->data, "pairs (JSONL)")->required();
  }
  {
    struct Opts {
      std::string model, data, held_out;
      TrainOpts train{.steps = 400};
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("train-margin", "fine-tune a margin predictor on labeled pairs", [p, &g](Run& run) {
      const Model rep = load_model(run, "model", p->model);
      const auto labeled = load_data(run, "data", p->data);
      std::vector<PreferencePair> held;
      if (!p->held_out.empty()) held = load_data(run, "held_out", p->held_out);
      const auto result = train_margin_predictor(rep, labeled, p->train.config(g.seed, g.threads), held);
      run.artifact("margin.ckpt", checkpoint_bytes(result.model));
      run.artifact("metrics.csv", result.log.to_csv());
    });
    o.add("model", p->model, "representation checkpoint")->required();
    o.add("data", p->data, "pairs with margin labels (JSONL)")->required();
    o.add("held-out", p->held_out, "held-out labeled pairs (JSONL)");
    p->train.add(o);
  }
  {
    struct Opts {
      std::string model, data;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("predict-margin", "emit normalized margins for pairs", [p, &g](Run& run) {
      const Model m = load_model(run, "model", p->model);
      const auto pairs = load_data(run, "data", p->data);
      emit_margins(m, pairs, run.claim("margins.csv"), g.threads);
      run.record("margins.csv");
    });
    o.add("model", p->model, "margin predictor checkpoint")->required();
    o.add("data", p->data, "pairs (JSONL)")->required();
  }
  {
    struct Opts {
      std::string init, data;
      ModelOpts model;
      TrainOpts train{.steps = 200};
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("train-sft", "teacher-forced language modeling on chosen responses", [p, &g](Run& run) {
      Model init;
      if (p->init.empty()) {
        init = Model(p->model.config(g.seed), {Head::lm});
        init.initialize(g.seed);
      } else {
        init = load_model(run, "init", p->init);
      }
      const auto result = train_sft(init, load_data(run, "data", p->data), p->train.config(g.seed, g.threads));
      run.artifact("sft.ckpt", checkpoint_bytes(result.model));
      run.artifact("metrics.csv", result.log.to_csv());
    });
    o.add("init", p->init, "initial checkpoint (default: fresh model)");
    o.add("data", p->data, "pairs (JSONL)")->required();
    p->model.add(o);
    p->train.add(o);
  }
  {
    struct Opts {
      std::string policy, reference, data, margin_source = "none", margins;
      double beta = 0.1;
      double fixed_margin = 0.0;
      TrainOpts train{.steps = 300, .eval_every = 50};
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("train-dpo", "margin-constrained DPO against a frozen reference", [p, &g](Run& run) {
      const Model policy = load_model(run, "policy", p->policy);
      const Model reference = p->reference.empty() ? policy : load_model(run, "reference", p->reference);
      DPOConfig dpo;
      dpo.beta = p->beta;
      dpo.fixed_margin = p->fixed_margin;
      using Source = DPOConfig::MarginSource;
      if (p->margin_source == "none") dpo.margin_source = Source::none;
      else if (p->margin_source == "fixed") dpo.margin_source = Source::fixed;
      else if (p->margin_source == "per_pair") dpo.margin_source = Source::per_pair;
      else fail(ErrorCategory::invalid_request, "unknown margin source '" + p->margin_source + "'");
      MarginMap margins;
      if (!p->margins.empty()) margins = margins_from_csv(read_file(run.input("margins", p->margins)));
      const auto result = train_dpo(policy, reference, load_data(run, "data", p->data), dpo,
                                    p->train.config(g.seed, g.threads), margins);
      run.artifact("policy.ckpt", checkpoint_bytes(result.model));
      run.artifact("metrics.csv", result.log.to_csv());
    });
    o.add("policy", p->policy, "initial policy checkpoint with an lm head")->required();
    o.add("reference", p->reference, "reference checkpoint (default: the initial policy)");
    o.add("data", p->data, "pairs (JSONL)")->required();
    o.add("beta", p->beta, "KL strength");
    o.add("margin-source", p->margin_source, "none, fixed or per_pair");
    o.add("fixed-margin", p->fixed_margin, "margin used by the fixed source");
    o.add("margins", p->margins, "per-pair margins (CSV pair_id,margin)");
    p->train.add(o);
  }
  {
    struct Opts {
      std::string model, data;
      SamplerConfig sampler;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("sample", "nucleus-sample candidate responses per prompt", [p, &g](Run& run) {
      const Model lm = load_model(run, "model", p->model);
      const auto pairs = load_data(run, "data", p->data);
      std::vector<std::vector<std::string>> out(pairs.size());
      parallel_for(pairs.size(), g.threads, [&](std::size_t i) {
        SamplerConfig c = p->sampler;
        c.seed = prompt_seed(g.seed, pairs[i].id);
        out[i] = sample_top_p(lm, pairs[i].prompt, c);
      });
      std::string text;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        for (std::size_t c = 0; c < out[i].size(); ++c)
          text += json{{"pair_id", pairs[i].id}, {"prompt", pairs[i].prompt}, {"index", c}, {"text", bytes_to_text(out[i][c])}}.dump() +
                  "\n";
      run.artifact("samples.jsonl", text);
    });
    o.add("model", p->model, "checkpoint with an lm head")->required();
    o.add("data", p->data, "pairs whose prompts are sampled (JSONL)")->required();
    o.add("n", p->sampler.n, "candidates per prompt");
    o.add("top-p", p->sampler.top_p, "nucleus mass");
    o.add("temperature", p->sampler.temperature, "softmax temperature");
    o.add("max-new-tokens", p->sampler.max_new_tokens, "generation budget");
  }
  {
    struct Opts {
      std::string model, samples;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("best-of-n", "keep the highest-reward candidate per prompt", [p](Run& run) {
      const Model reward = load_model(run, "model", p->model);
      struct Group {
        std::string prompt;
        std::vector<std::string> texts;
        std::vector<int> indices;
      };
      std::vector<std::string> order;
      std::map<std::string, Group> groups;
      for (const auto& row : load_jsonl(run, "samples", p->samples)) {
        const auto id = field<std::string>(row, "pair_id", p->samples);
        auto [it, fresh] = groups.try_emplace(id);
        if (fresh) {
          order.push_back(id);
          it->second.prompt = field<std::string>(row, "prompt", p->samples);
        }
        it->second.texts.push_back(text_to_bytes(field<std::string>(row, "text", p->samples), p->samples));
        it->second.indices.push_back(field<int>(row, "index", p->samples));
      }
      std::string text;
      for (const auto& id : order) {
        const auto& grp = groups.at(id);
        const auto best = best_of_n(reward, grp.prompt, grp.texts);
        text += json{{"pair_id", id},
                     {"prompt", grp.prompt},
                     {"index", grp.indices[best.index]},
                     {"score", best.score},
                     {"text", bytes_to_text(grp.texts[best.index])}}
                    .dump() +
                "\n";
      }
      run.artifact("best.jsonl", text);
    });
    o.add("model", p->model, "reward checkpoint")->required();
    o.add("samples", p->samples, "candidates from `sample` (JSONL)")->required();
  }
  {
    struct Opts {
      std::string data, a, b;
      double epsilon = 0.0;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("judge", "planted-rule judge over two systems, both orders", [p](Run& run) {
      std::map<std::string, int> type_of;
      for (const auto& pair : load_data(run, "data", p->data)) {
        const auto t = pref_type_index(pair.tags.pref_type);
        if (!t) fail(ErrorCategory::validation, "judge: pair '" + pair.id + "' has no synthetic preference type");
        type_of[pair.id] = *t;
      }
      auto load = [&](const std::string& role, const std::string& path) {
        std::vector<std::pair<std::string, std::string>> rows;
        for (const auto& row : load_jsonl(run, role, path))
          rows.emplace_back(field<std::string>(row, "pair_id", path),
                            text_to_bytes(field<std::string>(row, "text", path), path));
        return rows;
      };
      const auto a = load("a", p->a);
      std::map<std::string, std::string> b;
      for (auto& [id, t] : load("b", p->b)) b[id] = t;
      std::vector<PassJudgment> rows;
      for (int pass = 1; pass <= 2; ++pass)
        for (const auto& [id, text_a] : a) {
          const auto it = b.find(id);
          if (it == b.end()) fail(ErrorCategory::validation, "judge: '" + id + "' has no response from system b");
          const auto t = type_of.find(id);
          if (t == type_of.end()) fail(ErrorCategory::validation, "judge: '" + id + "' is not in the data file");
          auto quality = [type = t->second](std::string_view r) { return double(planted_quality(r, type)); };
          const Verdict v = pass == 1 ? oracle_judge(text_a, it->second, quality, p->epsilon)
                                      : oracle_judge(it->second, text_a, quality, p->epsilon);
          rows.push_back({{id, v}, pass});
        }
      run.artifact("judgments.csv", judgments_to_csv(rows));
    });
    o.add("data", p->data, "pairs supplying each prompt's preference type (JSONL)")->required();
    o.add("a", p->a, "system a responses (JSONL with pair_id, text)")->required();
    o.add("b", p->b, "system b responses (JSONL with pair_id, text)")->required();
    o.add("epsilon", p->epsilon, "quality difference treated as a tie");
  }
  {
    struct Opts {
      std::string judgments, inconsistent = "tie";
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("win-rate", "consistency-filtered win rate from two judging passes", [p](Run& run) {
      std::vector<Judgment> pass1, pass2;
      for (const auto& row : judgments_from_csv(read_file(run.input("judgments", p->judgments))))
        (row.pass == 1 ? pass1 : pass2).push_back(row.judgment);
      InconsistentPolicy policy;
      if (p->inconsistent == "tie") policy = InconsistentPolicy::tie;
      else if (p->inconsistent == "drop") policy = InconsistentPolicy::drop;
      else fail(ErrorCategory::invalid_request, "unknown inconsistency policy '" + p->inconsistent + "'");
      run.artifact("win_rate.csv", win_rate_to_csv(win_rate(consistency_filter(pass1, pass2, policy))));
    });
    o.add("judgments", p->judgments, "judgments from `judge` (CSV)")->required();
    o.add("inconsistent", p->inconsistent, "tie or drop");
  }
  {
    struct Opts {
      std::string model, data, tag = "pref_type", order = "chosen-first";
      std::vector<int> layers;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("probe", "per-layer representations, PCA and silhouette", [p, &g](Run& run) {
      const Model m = load_model(run, "model", p->model);
      auto pairs = load_data(run, "data", p->data);
      if (p->order == "chosen-first") pairs = chosen_first(std::move(pairs));
      else if (p->order != "stored") fail(ErrorCategory::invalid_request, "unknown order '" + p->order + "'");
      std::vector<int> layers = p->layers;
      if (layers.empty())
        for (int l = 1; l <= m.config().n_layers; ++l) layers.push_back(l);
      std::ostringstream summary;
      summary << "layer,silhouette,explained_1,explained_2\n";
      for (const auto& mat : dump_representations(m, pairs, layers, g.threads)) {
        const std::string stem = "layer" + std::to_string(mat.layer);
        const auto proj = pca_project(mat.data(), 2);
        std::vector<std::string> ids;
        for (const auto& r : mat.rows) ids.push_back(r.pair_id);
        run.artifact(stem + "_representations.csv", matrix_to_csv(mat));
        run.artifact(stem + "_pca.csv", projection_to_csv(ids, proj));
        run.artifact(stem + "_pca.svg", projection_to_svg(proj, mat.tags(p->tag), "layer " + std::to_string(mat.layer)));
        summary << mat.layer << ',' << format_double(silhouette(mat, p->tag)) << ','
                << format_double(proj.explained_ratio[0]) << ',' << format_double(proj.explained_ratio[1]) << '\n';
      }
      run.artifact("silhouette.csv", summary.str());
    });
    o.add("model", p->model, "representation checkpoint")->required();
    o.add("data", p->data, "pairs to probe (JSONL)")->required();
    o.add("layers", p->layers, "1-based layers (default: all)");
    o.add("tag", p->tag, "pref_type or task");
    o.add("order", p->order, "chosen-first or stored");
  }
  {
    struct Opts {
      std::string data, objective = "classifier";
      ModelOpts model{.d_model = 16, .n_heads = 2};
      double weight_scale = 5.0;
      GradCheckOptions check;
    };
    auto p = std::make_shared<Opts>();
    auto& o = reg.add("grad-check", "central-difference check of one objective's gradient", [p, &g](Run& run) {
      const auto pairs = load_data(run, "data", p->data);
      require(!pairs.empty(), ErrorCategory::invalid_request, "grad-check: data file is empty");
      const Objective objective = parse_objective(p->objective);
      Transformer<double> model(p->model.config(g.seed), objective_heads(objective));
      model.initialize(g.seed);
      model.params() *= p->weight_scale;
      const LossGraph graph = objective_graph(model, objective, {.pair = pairs.front()});
      GradCheckOptions opts = p->check;
      opts.seed = g.seed;
      opts.name_of = [&](Eigen::Index i) { return model.layout().describe(i); };
      VectorXd params = model.params();
      const auto report = grad_check(graph, params, opts);
      run.artifact("gradcheck.txt", report.to_text());
      const json summary = {{"objective", p->objective},
                            {"max_rel_error", report.max_rel_error},
                            {"worst", report.worst_name},
                            {"tolerance", report.tolerance},
                            {"passed", report.passed()}};
      run.artifact("gradcheck.json", summary.dump(2) + "\n");
      if (!report.passed())
        run.fail_after_finish(ErrorCategory::validation, "grad-check: max relative error " +
                                                             format_double(report.max_rel_error) + " exceeds tolerance");
    });
    o.add("data", p->data, "pairs; the first one is probed (JSONL)")->required();
    o.add("objective", p->objective, "classifier, reward, margin or dpo");
    p->model.add(o);
    o.add("weight-scale", p->weight_scale, "multiplier applied to the initial weights");
    o.add("probes", p->check.probes, "probed coordinates (0: all)");
    o.add("eps", p->check.eps, "central-difference step");
    o.add("tolerance", p->check.tolerance, "maximum relative error");
  }
}

void print_error(const std::string& category, const std::string& message) {
  std::cerr << json{{"error", {{"category", category}, {"message", message}}}}.dump() << '\n';
}

}  // namespace
}  // namespace lrhp::cli

int main(int argc, char** argv) {
  using namespace lrhp::cli;
  CLI::App app{"Preference representation learning pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI configuration file; command-line flags take precedence");
  Globals globals;
  app.add_option("--seed", globals.seed, "global seed")->capture_default_str();
  app.add_option("--output-dir", globals.output_dir, "directory receiving artifacts and manifest.json")
      ->capture_default_str();
  app.add_option("--threads", globals.threads, "worker threads; outputs do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  Registry registry(app, globals);
  register_commands(registry, globals);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kUsageExit;
  }
  try {
    registry.dispatch();
  } catch (const lrhp::Error& e) {
    print_error(lrhp::category_name(e.category()), e.what());
    return lrhp::exit_code(e.category());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kInternalExit;
  }
  return 0;
}
