// cove: train and evaluate compositions of session-aware recommendation
// experts from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cove/cove.hpp"

namespace fs = std::filesystem;
using namespace cove;

namespace {

struct CsvFlags {
  std::string delimiter = ",";
  std::string user_col = "user_id";
  std::string session_col = "session_id";
  std::string timestamp_col = "timestamp";
  std::string item_col = "item_id";
  bool no_header = false;
  bool lenient = false;

  ColumnMapping mapping() const {
    if (delimiter.size() != 1) throw ConfigError("delimiter must be a single character");
    ColumnMapping m;
    m.delimiter = delimiter[0];
    m.user = user_col;
    m.session = session_col;
    m.timestamp = timestamp_col;
    m.item = item_col;
    m.has_header = !no_header;
    return m;
  }
};

void print_stats(std::ostream& os, const DatasetStats& st) {
  os << "interactions: " << st.interactions << "\n"
     << "users: " << st.users << "\n"
     << "sessions: " << st.sessions << "\n"
     << "items: " << st.items << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "sessions/user: %.2f\ninteractions/item: %.2f\n"
                "interactions/session: %.2f\ndensity: %.3f%%\n",
                st.sessions_per_user, st.interactions_per_item,
                st.interactions_per_session, st.density * 100.0);
  os << buf;
}

void write_report(const MetricsReport& rep, const std::string& mode, std::size_t gate_k,
                  std::size_t catalog, const std::string& prefix) {
  {
    std::ofstream os(prefix + ".txt");
    if (!os) throw DataError("cannot write report: " + prefix + ".txt");
    os << "mode: " << mode << "\n"
       << "gate_k: " << gate_k << "\n"
       << "catalog: " << catalog << "\n"
       << "interactions: " << rep.interactions << "\n"
       << "users: " << rep.users << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "auc: %.6f\n", rep.auc);
    os << buf;
    std::snprintf(buf, sizeof(buf), "mrr: %.6f\n", rep.mrr);
    os << buf;
    for (const auto& [k, v] : rep.ndcg) {
      std::snprintf(buf, sizeof(buf), "ndcg@%zu: %.6f\n", k, v);
      os << buf;
    }
    for (const auto& [k, v] : rep.recall) {
      std::snprintf(buf, sizeof(buf), "recall@%zu: %.6f\n", k, v);
      os << buf;
    }
  }
  {
    std::ofstream os(prefix + ".csv");
    os << "auc,mrr";
    for (const auto& [k, v] : rep.ndcg) os << ",ndcg@" << k;
    for (const auto& [k, v] : rep.recall) os << ",recall@" << k;
    os << ",interactions,users\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", rep.auc, rep.mrr);
    os << buf;
    for (const auto& [k, v] : rep.ndcg) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      os << buf;
    }
    for (const auto& [k, v] : rep.recall) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      os << buf;
    }
    os << "," << rep.interactions << "," << rep.users << "\n";
  }
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  for (const auto& tok : split_list(s)) ks.push_back(std::stoull(tok));
  if (ks.empty()) throw ConfigError("--ks: empty list");
  return ks;
}

int cmd_ingest(const std::string& input, const std::string& output, std::size_t min_sessions,
               std::size_t min_item_interactions, const CsvFlags& csv) {
  std::size_t skipped = 0;
  auto raw = load_interactions(input, csv.mapping(), csv.lenient, &skipped);
  std::cout << "rows: " << raw.size() << "\n";
  if (skipped > 0) std::cout << "skipped: " << skipped << "\n";
  Dataset ds = build_dataset(raw, min_sessions, min_item_interactions);
  print_stats(std::cout, dataset_stats(ds));
  save_snapshot(ds, output);
  std::cout << "snapshot: " << output << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc) {
  if (rc.data_path.empty()) throw ConfigError("train: no dataset (set data= or --data)");
  Dataset ds = load_snapshot(rc.data_path);
  SplitDataset sp = split(ds, rc.split_seed);
  rc.train.validate();

  std::cout << "training " << variant_name(rc.train.variant) << " model on "
            << ds.num_users() << " users / " << ds.num_items() << " items; experts:";
  for (ExpertKind k : rc.train.roster) std::cout << " " << kind_name(k);
  std::cout << "\n";

  TrainResult res = train(rc.train, sp);
  for (const auto& e : res.log) std::cout << format_epoch_log(e) << "\n";
  std::cout << "best epoch " << res.best_epoch << " val_mrr " << res.best_val_mrr << "\n";

  fs::create_directories(rc.out_dir);
  const std::string ckpt = rc.out_dir + "/model.cvmd";
  const std::string digest = res.digest() + " split_seed=" + std::to_string(rc.split_seed);
  save_checkpoint(res.model, ckpt, digest);
  std::ofstream log(rc.out_dir + "/train_log.txt");
  for (const auto& e : res.log) log << format_epoch_log(e) << "\n";
  std::cout << "checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& mode, std::uint64_t split_seed, std::size_t gate_k,
                 const std::string& ks, bool last_only, const std::string& out_prefix) {
  CoVEModel model = load_checkpoint(ckpt_path);
  Dataset ds = load_snapshot(data_path);
  SplitDataset sp = split(ds, split_seed);
  const std::size_t k = gate_k == 0 ? model.num_experts() : gate_k;
  EvalMode em = mode == "validation" ? EvalMode::kValidation : EvalMode::kTest;
  MetricsReport rep = evaluate(model, sp, em, k, last_only, parse_ks(ks));
  write_report(rep, mode, k, model.num_items(), out_prefix);
  std::ifstream is(out_prefix + ".txt");
  std::cout << is.rdbuf();
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b,
                const std::string& data_path, const std::string& mode,
                std::uint64_t split_seed, std::size_t gate_k, const std::string& out_csv) {
  CoVEModel a = load_checkpoint(path_a);
  CoVEModel b = load_checkpoint(path_b);
  Dataset ds = load_snapshot(data_path);
  SplitDataset sp = split(ds, split_seed);
  EvalMode em = mode == "validation" ? EvalMode::kValidation : EvalMode::kTest;
  auto rep_a = evaluate(a, sp, em, gate_k == 0 ? a.num_experts() : gate_k);
  auto rep_b = evaluate(b, sp, em, gate_k == 0 ? b.num_experts() : gate_k);
  if (rep_a.per_interaction.size() != rep_b.per_interaction.size())
    throw DataError("compare: reports are not paired");

  struct Row {
    std::string name;
    double va, vb;
    TTestResult tt;
  };
  std::vector<Row> rows;
  auto add = [&](const std::string& name, auto term) {
    std::vector<double> ta, tb;
    for (std::size_t i = 0; i < rep_a.per_interaction.size(); ++i) {
      ta.push_back(term(rep_a.per_interaction[i].rank));
      tb.push_back(term(rep_b.per_interaction[i].rank));
    }
    double ma = 0, mb = 0;
    for (double x : ta) ma += x;
    for (double x : tb) mb += x;
    ma /= ta.size();
    mb /= tb.size();
    rows.push_back(Row{name, ma, mb, paired_t_test(ta, tb)});
  };
  add("auc", [](const RankResult& r) { return r.auc_term(); });
  add("mrr", [](const RankResult& r) { return r.mrr_term(); });
  add("ndcg@10", [](const RankResult& r) { return r.ndcg_term(10); });
  add("ndcg@20", [](const RankResult& r) { return r.ndcg_term(20); });
  add("recall@10", [](const RankResult& r) { return r.recall_term(10); });
  add("recall@20", [](const RankResult& r) { return r.recall_term(20); });

  std::ofstream csv;
  if (!out_csv.empty()) {
    csv.open(out_csv);
    csv << "metric,a,b,t,p,significant\n";
  }
  std::cout << "metric      a         b         t         p        sig(a>b)\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %9.6f %9.6f %9.4f %8.5f %s\n", r.name.c_str(),
                  r.va, r.vb, r.tt.t, r.tt.p, r.tt.p < 0.05 ? "*" : "");
    std::cout << buf;
    if (csv.is_open()) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%d\n", r.name.c_str(), r.va,
                    r.vb, r.tt.t, r.tt.p, r.tt.p < 0.05 ? 1 : 0);
      csv << buf;
    }
  }
  return 0;
}

int cmd_analyze(const std::string& bpr_path, const std::string& gru_path,
                const std::string& data_path, std::uint64_t split_seed,
                const std::string& out_prefix) {
  CoVEModel long_model = load_checkpoint(bpr_path);
  CoVEModel short_model = load_checkpoint(gru_path);
  Dataset ds = load_snapshot(data_path);
  SplitDataset sp = split(ds, split_seed);
  auto rep_long = evaluate(long_model, sp, EvalMode::kTest, long_model.num_experts());
  auto rep_short = evaluate(short_model, sp, EvalMode::kTest, short_model.num_experts());
  PreferenceBits bits = preference_bits(rep_long, rep_short);

  {
    std::ofstream os(out_prefix + "_bits.csv");
    if (!os) throw DataError("cannot write " + out_prefix + "_bits.csv");
    os << "user,bit\n";
    for (std::size_t i = 0; i < bits.bits.size(); ++i)
      os << rep_long.per_interaction[i].user << "," << bits.bits[i] << "\n";
  }
  {
    std::ofstream os(out_prefix + "_hist.csv");
    os << "bin,count\n";
    for (std::size_t b = 0; b < bits.histogram.size(); ++b) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.1f,%zu\n", b / 10.0, bits.histogram[b]);
      os << buf;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "corpus_mean_bit: %.4f\nuser_mean_bit: %.4f\n",
                bits.corpus_mean, bits.user_mean);
  std::cout << buf << "interactions: " << bits.bits.size() << "\n"
            << "users: " << bits.per_user_mean.size() << "\n"
            << "series: " << out_prefix << "_bits.csv\n"
            << "histogram: " << out_prefix << "_hist.csv\n";
  return 0;
}

int cmd_plot(const std::string& input, const std::string& output, std::string kind) {
  std::ifstream is(input);
  if (!is) throw DataError("plot: cannot open " + input);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  if (lines.empty()) throw DataError("plot: empty input " + input);

  if (kind == "auto") {
    if (lines[0].rfind("epoch=", 0) == 0) kind = "training-log";
    else if (lines[0].rfind("bin,", 0) == 0) kind = "histogram";
    else if (lines[0].find(": ") != std::string::npos) kind = "metrics";
    else throw DataError("plot: cannot sniff input kind of " + input);
  }

  std::ofstream os(output);
  if (!os) throw DataError("plot: cannot write " + output);
  if (kind == "training-log") {
    os << "epoch,loss,val_mrr\n";
    for (const auto& l : lines) {
      std::size_t epoch;
      double loss, mrr, sec;
      if (std::sscanf(l.c_str(), "epoch=%zu loss=%lf val_mrr=%lf sec=%lf", &epoch, &loss,
                      &mrr, &sec) == 4)
        os << epoch << "," << loss << "," << mrr << "\n";
    }
  } else if (kind == "histogram") {
    os << "bin,count\n";
    for (std::size_t i = 1; i < lines.size(); ++i) os << lines[i] << "\n";
  } else if (kind == "metrics") {
    os << "metric,value\n";
    for (const auto& l : lines) {
      auto colon = l.find(": ");
      if (colon != std::string::npos)
        os << l.substr(0, colon) << "," << l.substr(colon + 2) << "\n";
    }
  } else {
    throw ConfigError("plot: unknown kind " + kind);
  }
  std::cout << "series: " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoVE: compositions of variant experts for session-aware recommendation"};
  app.require_subcommand(1);

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "filter a raw interaction log into a snapshot");
  std::string in_path, out_path;
  std::size_t min_sessions = 3, min_item = 5;
  CsvFlags csv;
  ingest->add_option("--input", in_path, "raw interaction log (csv/tsv, optionally .gz)")
      ->required();
  ingest->add_option("--output", out_path, "snapshot file to write")->required();
  ingest->add_option("--min-sessions", min_sessions, "minimum sessions per user");
  ingest->add_option("--min-item-interactions", min_item, "minimum occurrences per item");
  ingest->add_option("--delimiter", csv.delimiter, "field delimiter (default ,)");
  ingest->add_option("--user-col", csv.user_col, "user column name or index");
  ingest->add_option("--session-col", csv.session_col, "session column name or index");
  ingest->add_option("--timestamp-col", csv.timestamp_col, "timestamp column name or index");
  ingest->add_option("--item-col", csv.item_col, "item column name or index");
  ingest->add_flag("--no-header", csv.no_header, "input has no header; columns are indices");
  ingest->add_flag("--lenient", csv.lenient, "skip malformed rows instead of failing");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a CoVE model or a standalone expert");
  std::string config_path, data_flag, out_dir_flag, experts_flag, variant_flag, loss_flag;
  std::string gate_input_flag;
  double lr_flag = -1.0, gate_lr_flag = -2.0;
  long long batch_flag = -1, epochs_flag = -1, seed_flag = -1, split_seed_flag = -1;
  long long dim_flag = -1, negatives_flag = -1, patience_flag = -1, max_len_flag = -1;
  bool uniform_flag = false;
  std::vector<std::string> init_from_flag;
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--data", data_flag, "dataset snapshot");
  tr->add_option("--out", out_dir_flag, "output directory");
  tr->add_option("--experts", experts_flag, "comma list: gru,attn,bpr,fpmc");
  tr->add_option("--variant", variant_flag, "hidden | score");
  tr->add_option("--loss", loss_flag, "bpr | bpr-max");
  tr->add_option("--lr", lr_flag, "learning rate in [0.005, 0.1]");
  tr->add_option("--gate-lr", gate_lr_flag, "gate learning rate override");
  tr->add_option("--batch-size", batch_flag, "batch size in [32, 512]");
  tr->add_option("--epochs", epochs_flag, "training epochs");
  tr->add_option("--dim", dim_flag, "shared hidden dimension");
  tr->add_option("--negatives", negatives_flag, "extra uniform negatives per positive");
  tr->add_option("--patience", patience_flag, "early-stopping patience");
  tr->add_option("--max-session-len", max_len_flag, "session truncation cap");
  tr->add_option("--seed", seed_flag, "training seed (overrides COVE_SEED)");
  tr->add_option("--split-seed", split_seed_flag, "validation/test coin-flip seed");
  tr->add_option("--gate-input", gate_input_flag, "default | last-item");
  tr->add_flag("--uniform-gate", uniform_flag, "ablation: pin the gate at 1/n");
  tr->add_option("--init-from", init_from_flag, "pretrained expert checkpoints");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "full-catalog ranking metrics for a checkpoint");
  std::string ev_ckpt, ev_data, ev_mode = "test", ev_ks = "10,20", ev_out = "report";
  std::size_t ev_gate_k = 0;
  std::uint64_t ev_split_seed = 7;
  bool ev_last_only = false;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset snapshot")->required();
  ev->add_option("--mode", ev_mode, "test | validation")
      ->check(CLI::IsMember({"test", "validation"}));
  ev->add_option("--gate-k", ev_gate_k, "sparse gate width (0 = all experts)");
  ev->add_option("--ks", ev_ks, "cutoffs for NDCG/Recall");
  ev->add_option("--split-seed", ev_split_seed, "split seed used at training time");
  ev->add_option("--out", ev_out, "report path prefix");
  ev->add_flag("--last-only", ev_last_only, "score only the final session position");

  // ---- compare ----
  auto* cmp = app.add_subcommand("compare", "paired t-test between two checkpoints");
  std::string cmp_a, cmp_b, cmp_data, cmp_mode = "test", cmp_out;
  std::size_t cmp_gate_k = 0;
  std::uint64_t cmp_split_seed = 7;
  cmp->add_option("--checkpoint-a", cmp_a)->required();
  cmp->add_option("--checkpoint-b", cmp_b)->required();
  cmp->add_option("--data", cmp_data)->required();
  cmp->add_option("--mode", cmp_mode)->check(CLI::IsMember({"test", "validation"}));
  cmp->add_option("--gate-k", cmp_gate_k, "sparse gate width (0 = all experts)");
  cmp->add_option("--split-seed", cmp_split_seed);
  cmp->add_option("--out", cmp_out, "comparison CSV");

  // ---- analyze-preferences ----
  auto* an = app.add_subcommand("analyze-preferences",
                                "long-vs-short preference bits from two expert checkpoints");
  std::string an_bpr, an_gru, an_data, an_out = "preferences";
  std::uint64_t an_split_seed = 7;
  an->add_option("--bpr", an_bpr, "long-term expert checkpoint")->required();
  an->add_option("--gru", an_gru, "short-term expert checkpoint")->required();
  an->add_option("--data", an_data, "dataset snapshot")->required();
  an->add_option("--split-seed", an_split_seed);
  an->add_option("--out", an_out, "output path prefix");

  // ---- plot ----
  auto* pl = app.add_subcommand("plot", "reshape logs/reports/histograms into plot series");
  std::string pl_in, pl_out, pl_kind = "auto";
  pl->add_option("--input", pl_in)->required();
  pl->add_option("--output", pl_out)->required();
  pl->add_option("--kind", pl_kind)
      ->check(CLI::IsMember({"auto", "training-log", "histogram", "metrics"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(in_path, out_path, min_sessions, min_item, csv);
    if (*tr) {
      KeyValueConfig file_cfg = config_path.empty() ? KeyValueConfig{}
                                                    : KeyValueConfig::parse_file(config_path);
      RunConfig rc = RunConfig::from_config(file_cfg);
      rc.apply_env();
      if (!data_flag.empty()) rc.data_path = data_flag;
      if (!out_dir_flag.empty()) rc.out_dir = out_dir_flag;
      if (!experts_flag.empty()) rc.train.roster = parse_roster(experts_flag);
      if (!variant_flag.empty()) rc.train.variant = parse_variant(variant_flag);
      if (!loss_flag.empty()) rc.train.loss = parse_loss(loss_flag);
      if (!gate_input_flag.empty())
        rc.train.gate_input_mode = gate_input_flag == "last-item"
                                       ? GateInputMode::kLastItem
                                       : GateInputMode::kPerExpertDefault;
      if (lr_flag >= 0.0) rc.train.learning_rate = lr_flag;
      if (gate_lr_flag > -2.0) rc.train.gate_learning_rate = gate_lr_flag;
      if (batch_flag >= 0) rc.train.batch_size = static_cast<std::size_t>(batch_flag);
      if (epochs_flag >= 0) rc.train.epochs = static_cast<std::size_t>(epochs_flag);
      if (dim_flag >= 0) rc.train.dim = static_cast<std::size_t>(dim_flag);
      if (negatives_flag >= 0)
        rc.train.negatives_per_positive = static_cast<std::size_t>(negatives_flag);
      if (patience_flag >= 0) rc.train.patience = static_cast<std::size_t>(patience_flag);
      if (max_len_flag >= 0)
        rc.train.max_session_len = static_cast<std::size_t>(max_len_flag);
      if (seed_flag >= 0) rc.train.seed = static_cast<std::uint64_t>(seed_flag);
      if (split_seed_flag >= 0) rc.split_seed = static_cast<std::uint64_t>(split_seed_flag);
      if (uniform_flag) rc.train.uniform_gate = true;
      if (!init_from_flag.empty()) rc.train.init_from = init_from_flag;
      return cmd_train(rc);
    }
    if (*ev)
      return cmd_evaluate(ev_ckpt, ev_data, ev_mode, ev_split_seed, ev_gate_k, ev_ks,
                          ev_last_only, ev_out);
    if (*cmp)
      return cmd_compare(cmp_a, cmp_b, cmp_data, cmp_mode, cmp_split_seed, cmp_gate_k,
                         cmp_out);
    if (*an) return cmd_analyze(an_bpr, an_gru, an_data, an_split_seed, an_out);
    if (*pl) return cmd_plot(pl_in, pl_out, pl_kind);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
