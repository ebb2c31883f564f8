// Minimal end-to-end run against the bundled toy corpus: ingest, split,
// train a two-expert score-level composition, evaluate on the test split.
//
//   ./quickstart [path/to/interactions.csv]

#include <iostream>

#include "cove/cove.hpp"

int main(int argc, char** argv) {
  using namespace cove;
  const std::string path = argc > 1 ? argv[1] : "data/toy_sessions.csv";

  auto raw = load_interactions(path, ColumnMapping{});
  Dataset dataset = build_dataset(raw, /*min_sessions=*/3, /*min_item_interactions=*/5);
  DatasetStats st = dataset_stats(dataset);
  std::cout << "corpus: " << st.users << " users, " << st.items << " items, "
            << st.interactions << " interactions\n";

  SplitDataset sp = split(dataset, /*seed=*/7);

  TrainConfig cfg;
  cfg.roster = {ExpertKind::kGru, ExpertKind::kBpr};
  cfg.variant = FusionVariant::kScore;
  cfg.dim = 16;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05;
  cfg.loss = LossKind::kBprMax;
  cfg.seed = 42;

  TrainResult res = train(cfg, sp);
  std::cout << "best epoch " << res.best_epoch << ", validation MRR " << res.best_val_mrr
            << "\n";

  MetricsReport rep = evaluate(res.model, sp, EvalMode::kTest, cfg.roster.size());
  std::cout << "test AUC " << rep.auc << ", MRR " << rep.mrr << ", Recall@10 "
            << rep.recall.at(10) << "\n";
  return 0;
}
