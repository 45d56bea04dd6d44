// Plants one campaign in a synthetic corpus, detects it, and compares the
// result with a timestamp-shuffled control.
#include <iostream>

#include <coordscan/coordscan.hpp>

int main() {
  using namespace coordscan;
  synth::GeneratorConfig g;
  const EpochSeconds start = epoch_from_civil(2026, 1, 1);
  g.span = {start, start + 30 * kSecondsPerDay};
  g.seed = 7;
  synth::CampaignSpec c;
  c.template_text = "breaking: officials confirm the bridge closure until further notice";
  c.channels = {0, 3, 5};
  c.window = {start + 10 * kSecondsPerDay + 9 * kSecondsPerHour, start + 10 * kSecondsPerDay + 10 * kSecondsPerHour};
  c.noise_rate = 0.01;
  g.campaigns = {c};

  const auto gen = synth::generate(g);
  const DetectionConfig cfg{Resolution::kHourly, {}, IdfScope::kBucket};
  const auto report = detect(gen.corpus, 0.85, cfg);
  const auto eval = synth::evaluate(report, gen.truth);
  std::cout << gen.corpus.size() << " messages, " << gen.truth.planted_pairs.size() << " planted pairs\n"
            << report.pairs.size() << " detected, precision " << eval.precision << ", recall " << eval.recall
            << "\n";
  for (const auto& p : report.pairs) {
    std::cout << "  " << format_bucket(p.bucket) << "  " << p.msg_a << " ~ " << p.msg_b << "  " << p.score << "\n";
  }

  const double taus[] = {0.85};
  const auto control = negative_control(gen.corpus, taus, 0.85, g.seed, 5, cfg);
  std::cout << "shuffled mean pairs at 0.85: " << control.mean_shuffled[0] << "\n";
}
