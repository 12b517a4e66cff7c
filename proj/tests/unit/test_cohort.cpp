#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cohort_fixture.hpp"
#include "cxr/cohort/dataset.hpp"
#include "cxr/cohort/splits.hpp"
#include "cxr/pretrain/corpus.hpp"

using namespace cxr;
using namespace cxr::cohort;
namespace fs = std::filesystem;
using models::Task;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto d = fs::path(::testing::TempDir()) / ("cxr_cohort_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::set<std::string> ids(const std::vector<ScanRecord>& scans) {
  std::set<std::string> out;
  for (const auto& s : scans) out.insert(s.scan_id);
  return out;
}

std::vector<float> window_row(const LabeledExample& ex, const models::LabelLayout& l, const std::string& event) {
  const auto e = l.event_index(event);
  std::vector<float> out;
  for (std::size_t w = 0; w < l.windows.size(); ++w) out.push_back(ex.labels[l.index(e, w)]);
  return out;
}

const std::string kScansHeader = "patient_id,scan_id,acquired_time_hours,location,image_path\n";
const std::string kEventsHeader = "patient_id,event_type,event_time_hours\n";

}  // namespace

TEST(Ingest, EmptyEventsFileIsValid) {
  const auto d = scratch_dir("empty");
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,ed,a.pgm\n");
  for (const std::string& content : {std::string(), kEventsHeader}) {
    write_text(d / "events.csv", content);
    const auto c = ingest((d / "events.csv").string(), (d / "scans.csv").string());
    EXPECT_TRUE(c.events.empty());
    EXPECT_EQ(c.scans.size(), 1u);
  }
}

TEST(Ingest, NonNumericTimeNamesTheRow) {
  const auto d = scratch_dir("nonnumeric");
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,ed,a.pgm\n");
  write_text(d / "events.csv", kEventsHeader + "A,icu,5\nA,mortality,soon\n");
  try {
    ingest((d / "events.csv").string(), (d / "scans.csv").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("events.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MalformedRowsAreRejected) {
  const auto d = scratch_dir("malformed");
  write_text(d / "events.csv", kEventsHeader);
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,icu_ward,a.pgm\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), ParseError);
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,ed\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), ParseError);
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,ed,a.pgm\n");
  write_text(d / "events.csv", kEventsHeader + "A,fever,3\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), ParseError);
  write_text(d / "events.csv", "patient,event,time\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), ParseError);
}

TEST(Ingest, DuplicateScanIdIsIntegrityError) {
  const auto d = scratch_dir("dup");
  write_text(d / "events.csv", kEventsHeader);
  write_text(d / "scans.csv", kScansHeader + "A,X1,0,ed,a.pgm\nB,X1,3,ed,b.pgm\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), IntegrityError);
}

TEST(Ingest, MortalityInvariants) {
  const auto d = scratch_dir("mortality");
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,ed,a.pgm\n");
  write_text(d / "events.csv", kEventsHeader + "A,mortality,5\nA,mortality,6\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), IntegrityError);
  write_text(d / "events.csv", kEventsHeader + "A,mortality,5\nA,icu,7\n");
  EXPECT_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()), IntegrityError);
  write_text(d / "events.csv", kEventsHeader + "A,icu,5\nA,mortality,5\n");
  EXPECT_NO_THROW(ingest((d / "events.csv").string(), (d / "scans.csv").string()));
}

TEST(Ingest, OrphanEventsAreKeptWithWarning) {
  const auto d = scratch_dir("orphan");
  write_text(d / "scans.csv", kScansHeader + "A,A1,0,ed,a.pgm\n");
  write_text(d / "events.csv", kEventsHeader + "Z,icu,5\n");
  const auto c = ingest((d / "events.csv").string(), (d / "scans.csv").string());
  EXPECT_EQ(c.events.size(), 1u);
  ASSERT_EQ(c.warnings.size(), 1u);
  EXPECT_NE(c.warnings[0].find("Z"), std::string::npos);
}

TEST(Ingest, WriteThenIngestRoundTrips) {
  const auto d = scratch_dir("roundtrip");
  auto f = cxr::testing::ten_patient_fixture();
  f.cohort.events.push_back({"P,01 \"quoted\"", "icu", 1.0 / 3.0});
  f.cohort.scans.push_back({"P,01 \"quoted\"", "Q1", 1e-7, Location::inpatient, "dir with space/q.pgm"});
  write_events((d / "events.csv").string(), f.cohort.events);
  write_scans((d / "scans.csv").string(), f.cohort.scans);
  const auto c = ingest((d / "events.csv").string(), (d / "scans.csv").string());
  EXPECT_EQ(c.events, f.cohort.events);
  EXPECT_EQ(c.scans, f.cohort.scans);
}

TEST(WindowLabels, EventAtThirtyHours) {
  const auto l = models::adverse_layout();
  const ScanRecord scan{"A", "A1", 100.0, Location::ed, ""};
  const auto ex = window_labels(scan, {{"A", "icu", 130.0}}, l);
  EXPECT_EQ(window_row(ex, l, "icu"), (std::vector<float>{0, 1, 1, 1, 1}));
  EXPECT_EQ(window_row(ex, l, "any_adverse"), (std::vector<float>{0, 1, 1, 1, 1}));
  EXPECT_EQ(window_row(ex, l, "mortality"), (std::vector<float>{0, 0, 0, 0, 0}));
}

TEST(WindowLabels, NoEventsGiveZeros) {
  const auto l = models::adverse_layout();
  const auto ex = window_labels({"A", "A1", 0.0, Location::ed, ""}, {}, l);
  for (float v : ex.labels) EXPECT_EQ(v, 0.f);
  for (float v : ex.mask) EXPECT_EQ(v, 1.f);
}

TEST(WindowLabels, UnionOverAdverseEvents) {
  const auto l = models::adverse_layout();
  const auto ex = window_labels({"A", "A1", 0.0, Location::ed, ""}, {{"A", "icu", 10.0}, {"A", "mortality", 90.0}}, l);
  EXPECT_EQ(window_row(ex, l, "any_adverse"), (std::vector<float>{1, 1, 1, 1, 1}));
  EXPECT_EQ(window_row(ex, l, "mortality"), (std::vector<float>{0, 0, 0, 1, 1}));
  EXPECT_EQ(window_row(ex, l, "intubation"), (std::vector<float>{0, 0, 0, 0, 0}));
}

TEST(WindowLabels, HalfOpenBoundaries) {
  const auto l = models::adverse_layout();
  const ScanRecord scan{"A", "A1", 50.0, Location::ed, ""};
  // at the scan instant: prior, not a label
  EXPECT_EQ(window_row(window_labels(scan, {{"A", "icu", 50.0}}, l), l, "icu"), (std::vector<float>{0, 0, 0, 0, 0}));
  // exactly at the end of the 24 h window: inside
  EXPECT_EQ(window_row(window_labels(scan, {{"A", "icu", 74.0}}, l), l, "icu"), (std::vector<float>{1, 1, 1, 1, 1}));
  // before the scan: ignored
  EXPECT_EQ(window_row(window_labels(scan, {{"A", "icu", 10.0}}, l), l, "icu"), (std::vector<float>{0, 0, 0, 0, 0}));
  const auto o = models::oxygen_layout();
  EXPECT_EQ(window_row(window_labels(scan, {{"A", "o2_gt6l", 130.0}}, o), o, "o2_gt6l"),
            (std::vector<float>{0, 0, 0, 1, 1}));
}

TEST(WindowLabels, MaskOnCensorMasksOnlyUnobservedNegatives) {
  const auto l = models::adverse_layout();
  const ScanRecord scan{"A", "A1", 0.0, Location::ed, ""};
  LabelOptions opt;
  opt.mask_on_censor = true;
  // follow-up ends at 60 h: 72h, 96h and any windows are unobserved
  auto ex = window_labels(scan, {{"A", "icu", 30.0}}, l, opt, 60.0);
  EXPECT_EQ(window_row(ex, l, "icu"), (std::vector<float>{0, 1, 1, 1, 1}));
  const auto icu = l.event_index("icu"), mort = l.event_index("mortality");
  EXPECT_EQ(ex.mask[l.index(icu, 0)], 1.f);
  EXPECT_EQ(ex.mask[l.index(icu, 4)], 1.f);  // positive labels stay defined
  EXPECT_EQ(ex.mask[l.index(mort, 1)], 1.f);
  EXPECT_EQ(ex.mask[l.index(mort, 2)], 0.f);
  EXPECT_EQ(ex.mask[l.index(mort, 4)], 0.f);
  // a death closes follow-up: nothing is censored
  ex = window_labels(scan, {{"A", "mortality", 30.0}}, l, opt, 30.0);
  for (float m : ex.mask) EXPECT_EQ(m, 1.f);
  // default mode never masks
  ex = window_labels(scan, {}, l, {}, 1.0);
  for (float m : ex.mask) EXPECT_EQ(m, 1.f);
}

TEST(TaskFilter, TenPatientFixtureMatchesExpectedMemberships) {
  const auto f = cxr::testing::ten_patient_fixture();
  EXPECT_EQ(ids(apply_task_filter(f.cohort.scans, f.cohort.events, Task::sip)), f.sip);
  EXPECT_EQ(ids(apply_task_filter(f.cohort.scans, f.cohort.events, Task::orp)), f.orp);
  EXPECT_EQ(ids(apply_task_filter(f.cohort.scans, f.cohort.events, Task::mip)), f.mip);
}

TEST(TaskFilter, RuleExamples) {
  const std::vector<ScanRecord> scans{{"A", "A1", 10, Location::ed, ""},
                                      {"A", "A2", 30, Location::ed, ""},
                                      {"B", "B1", 5, Location::inpatient, ""},
                                      {"C", "C1", 0, Location::ed, ""},
                                      {"C", "C2", 9, Location::ed, ""}};
  const std::vector<EventRecord> events{{"A", "icu", 20}};
  EXPECT_EQ(ids(apply_task_filter(scans, events, Task::sip)), (std::set<std::string>{"A1", "C1", "C2"}));
  EXPECT_EQ(ids(apply_task_filter(scans, events, Task::orp)), (std::set<std::string>{"A1", "A2", "C1", "C2"}));
  EXPECT_EQ(ids(apply_task_filter(scans, events, Task::mip)), (std::set<std::string>{"A1", "B1", "C1", "C2"}));
}

TEST(Sequences, CutoffExample) {
  Cohort c;
  c.scans = {{"A", "A1", 0, Location::ed, ""}, {"A", "A2", 330, Location::inpatient, ""},
             {"A", "A3", 380, Location::inpatient, ""}};
  const auto seqs = build_sequences(c.scans, c, models::adverse_layout());
  ASSERT_EQ(seqs.size(), 3u);
  const auto& last = seqs[2];
  EXPECT_EQ(last.index_scan_id, "A3");
  ASSERT_EQ(last.scans.size(), 2u);
  EXPECT_EQ(last.scans[0].scan_id, "A2");
  EXPECT_EQ(last.hours, (std::vector<double>{50.0, 0.0}));
  EXPECT_EQ(seqs[0].scans.size(), 1u);
  EXPECT_EQ(seqs[1].hours, (std::vector<double>{330.0, 0.0}));
}

TEST(Sequences, SingleScanAndTiedTimes) {
  Cohort c;
  c.scans = {{"A", "A1", 7, Location::ed, ""},
             {"B", "B2", 5, Location::ed, ""},
             {"B", "B1", 5, Location::ed, ""},
             {"B", "B3", 9, Location::ed, ""}};
  const auto seqs = build_sequences(c.scans, c, models::adverse_layout());
  ASSERT_EQ(seqs.size(), 4u);
  EXPECT_EQ(seqs[0].hours, std::vector<double>{0.0});
  // two scans at the same instant: one of them precedes B3
  EXPECT_EQ(seqs[3].hours, (std::vector<double>{4.0, 0.0}));
  EXPECT_EQ(seqs[3].scans[0].scan_id, "B1");
  // a tied scan is not "before" the index
  EXPECT_EQ(seqs[1].hours, std::vector<double>{0.0});
}

TEST(Sequences, LabelsComeFromIndexScan) {
  const auto f = cxr::testing::ten_patient_fixture();
  const auto l = models::adverse_layout();
  const auto mip = apply_task_filter(f.cohort.scans, f.cohort.events, Task::mip);
  const auto seqs = build_sequences(mip, f.cohort, l);
  EXPECT_EQ(seqs.size(), mip.size());
  for (const auto& s : seqs) {
    const auto& index = s.scans.back();
    EXPECT_EQ(index.scan_id, s.index_scan_id);
    const auto direct = label_scans({index}, f.cohort, l)[0];
    EXPECT_EQ(direct.labels, s.labels.labels);
  }
}

TEST(Splits, FiveFoldsOfTwentyDisjoint) {
  std::vector<std::string> patients;
  std::set<std::string> pos;
  for (int i = 0; i < 100; ++i) {
    patients.push_back("p" + std::to_string(i));
    if (i % 3 == 0) pos.insert(patients.back());
  }
  Rng rng(4);
  const auto folds = stratified_kfold(patients, pos, 5, rng);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::string> seen;
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 20u);
    for (const auto& p : f) EXPECT_TRUE(seen.insert(p).second) << p << " in two folds";
  }
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Splits, Errors) {
  Rng rng(1);
  EXPECT_THROW(stratified_kfold({"a", "b", "c"}, {}, 5, rng), InvalidInputError);
  EXPECT_THROW(stratified_kfold({"a", "b", "c"}, {}, 1, rng), ContractError);
  EXPECT_THROW(patient_split({"a"}, rng, 1.5), ContractError);
}

TEST(Splits, PatientSplitIsDisjointAndSized) {
  std::vector<std::string> patients;
  for (int i = 0; i < 250; ++i) patients.push_back("p" + std::to_string(i));
  Rng rng(2);
  const auto s = patient_split(patients, rng);
  EXPECT_EQ(s.test.size(), 30u);
  EXPECT_EQ(s.trainval.size(), 220u);
  std::set<std::string> tv(s.trainval.begin(), s.trainval.end());
  for (const auto& p : s.test) EXPECT_FALSE(tv.count(p));
}

TEST(Splits, StratificationWithinTwoPercentOnSyntheticCohorts) {
  SynthConfig cfg;
  cfg.n_patients = 1000;
  cfg.image_size = 8;
  const auto layout = models::adverse_layout();
  const std::size_t label = layout.find("any_adverse@96h");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = generate_cohort(cfg, seed);
    const auto sip = apply_task_filter(c.cohort.scans, c.cohort.events, Task::sip);
    const auto pos = positive_patients(sip, label_scans(sip, c.cohort, layout), label);
    Rng rng = derive_rng(seed, {1});
    const auto split = patient_split(c.cohort.patients(), rng);
    const auto folds = stratified_kfold(split.trainval, pos, 5, rng);
    std::size_t total_pos = 0;
    for (const auto& p : split.trainval) total_pos += pos.count(p);
    const double global = double(total_pos) / double(split.trainval.size());
    for (const auto& f : folds) {
      std::size_t fp = 0;
      for (const auto& p : f) fp += pos.count(p);
      EXPECT_NEAR(double(fp) / double(f.size()), global, 0.02) << "seed " << seed;
    }
    // no leakage between test and folds
    std::set<std::string> test(split.test.begin(), split.test.end());
    for (const auto& f : folds)
      for (const auto& p : f) EXPECT_FALSE(test.count(p));
  }
}

TEST(Synth, FixedSeedGivesBitIdenticalFiles) {
  SynthConfig cfg;
  cfg.n_patients = 12;
  cfg.image_size = 16;
  cfg.pretrain_images = 5;
  const auto a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
  synth_cohort(cfg, 7, a.string());
  synth_cohort(cfg, 7, b.string());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(read_bytes(e.path()), read_bytes(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 12u);
  const auto c = ingest((a / "events.csv").string(), (a / "scans.csv").string());
  const auto gen = generate_cohort(cfg, 7);
  EXPECT_EQ(c.scans, gen.cohort.scans);
  EXPECT_EQ(c.events, gen.cohort.events);
  for (const auto& s : c.scans) EXPECT_TRUE(fs::exists(a / s.image_path)) << s.image_path;
  const auto corpus = pretrain::load_labeled_corpus((a / "pretrain").string());
  EXPECT_EQ(corpus.images.size(), 5u);
  EXPECT_EQ(corpus.finding_names, synth_findings());
  EXPECT_THROW(generate_cohort([] { SynthConfig z; z.n_patients = 0; return z; }(), 1), ContractError);
}

TEST(Synth, SeverityDrivesAmplitude) {
  SynthConfig cfg;
  cfg.n_patients = 1000;
  cfg.image_size = 8;
  const auto c = generate_cohort(cfg, 3);
  std::vector<double> s, a;
  for (const auto& p : c.patients) {
    double mean = 0;
    for (const auto& sc : p.scans) mean += sc.amplitude;
    s.push_back(p.severity);
    a.push_back(mean / double(p.scans.size()));
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
  const double ms = mean(s), ma = mean(a);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sab += (s[i] - ms) * (a[i] - ma);
    saa += (s[i] - ms) * (s[i] - ms);
    sbb += (a[i] - ma) * (a[i] - ma);
  }
  EXPECT_GT(sab / std::sqrt(saa * sbb), 0.9);
}

TEST(Synth, GeneratedCohortsSatisfyInvariants) {
  SynthConfig cfg;
  cfg.n_patients = 400;
  cfg.image_size = 8;
  cfg.trend = 0.1;
  const auto c = generate_cohort(cfg, 5);
  EXPECT_NO_THROW(check_event_integrity(c.cohort.events));
  std::set<std::string> scan_ids;
  for (const auto& s : c.cohort.scans) EXPECT_TRUE(scan_ids.insert(s.scan_id).second);
  // severe patients have more adverse events
  std::size_t lo_events = 0, hi_events = 0;
  const auto idx = index_events(c.cohort.events);
  for (const auto& p : c.patients) {
    auto it = idx.find(p.id);
    const bool any = it != idx.end() && std::isfinite(first_adverse_time(it->second));
    (p.severity < 0.5 ? lo_events : hi_events) += any;
  }
  EXPECT_GT(hi_events, 2 * lo_events);
  // SIP is ORP with extra exclusions
  const auto sip = ids(apply_task_filter(c.cohort.scans, c.cohort.events, Task::sip));
  const auto orp = ids(apply_task_filter(c.cohort.scans, c.cohort.events, Task::orp));
  for (const auto& s : sip) EXPECT_TRUE(orp.count(s));
  // label monotonicity across windows for every eligible example
  for (auto task : {Task::sip, Task::orp, Task::mip}) {
    const auto layout = models::layout_for(task);
    const auto elig = apply_task_filter(c.cohort.scans, c.cohort.events, task);
    for (const auto& ex : label_scans(elig, c.cohort, layout))
      for (std::size_t e = 0; e < layout.events.size(); ++e)
        for (std::size_t w = 1; w < layout.windows.size(); ++w)
          ASSERT_LE(ex.labels[layout.index(e, w - 1)], ex.labels[layout.index(e, w)]);
    if (task == Task::mip) {
      const auto seqs = build_sequences(elig, c.cohort, layout);
      EXPECT_EQ(seqs.size(), elig.size());
      for (const auto& s : seqs) {
        EXPECT_EQ(s.hours.back(), 0.0);
        for (std::size_t i = 1; i < s.hours.size(); ++i) EXPECT_GT(s.hours[i - 1], s.hours[i]);
        EXPECT_LT(s.hours.front(), models::kSequenceCutoffHours);
      }
    }
  }
  // cumulative event counts never decrease with the window
  for (const auto& row : event_window_counts(c.cohort))
    for (std::size_t w = 1; w < row.counts.size(); ++w) EXPECT_LE(row.counts[w - 1], row.counts[w]);
}

TEST(Summary, CountsMatchFilters) {
  const auto f = cxr::testing::ten_patient_fixture();
  Rng rng(3);
  const auto split = patient_split(f.cohort.patients(), rng, 0.2);
  const auto rows = cohort_summary(f.cohort, split);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].trainval_scans + rows[0].test_scans, f.sip.size());
  EXPECT_EQ(rows[1].trainval_scans + rows[1].test_scans, f.orp.size());
  EXPECT_EQ(rows[2].trainval_scans + rows[2].test_scans, f.mip.size());
  EXPECT_NE(format_summary(rows).find("mip"), std::string::npos);
}

TEST(Dataset, ExamplesCarryPreprocessedImagesAndIds) {
  SynthConfig cfg;
  cfg.n_patients = 6;
  cfg.image_size = 32;
  const auto c = generate_cohort(cfg, 9);
  augment::AugmentConfig ac;
  ac.target_size = 16;
  auto store = ImageStore::from_synth(c, ac);
  const auto layout = models::adverse_layout();
  const auto sip = apply_task_filter(c.cohort.scans, c.cohort.events, Task::sip);
  const auto ex = make_examples(sip, label_scans(sip, c.cohort, layout), store);
  ASSERT_EQ(ex.size(), sip.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    EXPECT_EQ(ex[i].image.height, 16u);
    EXPECT_EQ(ex[i].id, sip[i].patient_id + "/" + sip[i].scan_id);
    EXPECT_EQ(ex[i].group, sip[i].patient_id);
  }
  const auto mip = apply_task_filter(c.cohort.scans, c.cohort.events, Task::mip);
  const auto seqs = make_sequences(build_sequences(mip, c.cohort, layout), store);
  for (const auto& s : seqs) EXPECT_EQ(s.images.size(), s.hours.size());
  const auto some = select_patients(ex, {ex[0].group});
  for (const auto& e : some) EXPECT_EQ(e.group, ex[0].group);
}
