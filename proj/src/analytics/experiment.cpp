#include "readtrace/analytics/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "readtrace/analytics/auc.hpp"

namespace readtrace::analytics {

namespace {

constexpr double kPageWidth = 612;
constexpr double kPageHeight = 792;
constexpr double kSlotTop = 740;
constexpr double kSlotSpacing = 90;
constexpr double kNearRadius = 38;  // inside half the 3 degree span at 60 cm

class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  int poisson(double lambda) {
    const double limit = std::exp(-lambda);
    int k = 0;
    for (double p = uniform(); p > limit; p *= uniform()) ++k;
    return k;
  }
  std::size_t index(std::size_t n) { return uniformIndex(engine_, n); }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

const std::vector<std::string> kWords = {
    "asthma",   "school",    "children", "allergy",  "risk",      "absence",  "therapy",   "patients",
    "hepatitis", "chronic",  "survey",   "activity", "physical",  "community", "placebo",  "pain",
    "choice",   "analgesia", "effect",   "prevalence", "sample",  "study",    "report",    "measure",
    "outcome",  "factor",    "group",    "control",  "trial",     "season",   "pollution", "exposure",
    "treatment", "response", "interview", "motivation", "change", "support",  "evidence",  "level",
    "higher",   "lower",     "among",    "across",   "between",   "during",   "after",     "before",
    "daily",    "weekly",    "reported", "observed", "expected",  "overall",  "primary",   "secondary"};

std::string sentence(Random& rng, int minWords, int maxWords) {
  const int n = minWords + static_cast<int>(rng.index(static_cast<std::size_t>(maxWords - minWords + 1)));
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i > 0) s += ' ';
    s += kWords[rng.index(kWords.size())];
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

int slotOf(Group g, int questionIndex) { return (g == Group::A ? 0 : kQuestionsPerTopic) + questionIndex - 1; }

Rect slotRect(int page, int slot) {
  const double centre = kSlotTop - kSlotSpacing * slot;
  return Rect({72, centre - 10}, {468, 20}, page);
}

std::vector<double> shuffledLevels(Random& rng, std::vector<double> levels, double scale) {
  rng.shuffle(levels);
  for (auto& l : levels) l *= scale;
  return levels;
}

double meanSquare(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

struct Difficulty {
  std::vector<double> paper, group, topic;
  double operator()(int p, Group g, int t) const {
    return paper[static_cast<std::size_t>(p - 1)] + group[g == Group::A ? 0 : 1] + topic[static_cast<std::size_t>(t - 1)];
  }
  double variance() const { return meanSquare(paper) + meanSquare(group) + meanSquare(topic); }
};

struct ParticipantDraw {
  std::vector<ParticipantGaze> gaze;
  std::vector<AnswerRow> answers;
  int correct = 0;
};

ParticipantDraw drawParticipant(Random& rng, const std::string& id, const ExperimentConfig& c, const Difficulty& diff,
                                const std::vector<AnswerLocation>& locations) {
  ParticipantDraw out;
  std::vector<int> order = {1, 2, 3, 4};
  rng.shuffle(order);
  const double eyeBase = 60.0 + 3.0 * rng.normal();
  const double strengthSd = std::sqrt(c.attentionSd * c.attentionSd + diff.variance() + c.gazeNoiseSd * c.gazeNoiseSd);
  const double latentSd = std::sqrt(c.attentionSd * c.attentionSd + c.answerNoiseSd * c.answerNoiseSd +
                                    c.difficultyOnCorrect * c.difficultyOnCorrect);
  // Bisect for the threshold that leaves targetCorrectRate of the latent mass above it.
  double lo = -10, hi = 10;
  for (int it = 0; it < 200; ++it) {
    const double mid = (lo + hi) / 2;
    const double above = 0.5 * std::erfc(mid / std::sqrt(2.0));
    (above > c.targetCorrectRate ? lo : hi) = mid;
  }
  const double threshold = lo * latentSd;
  const double diffSd = std::sqrt(diff.variance());

  for (int paper : order) {
    const Group group = rng.uniform() < 0.5 ? Group::A : Group::B;
    ParticipantGaze gaze{id, paper, group, {}};
    for (int topic = 1; topic <= kTopicsPerGroup; ++topic) {
      const double shared = c.attentionSd * std::sqrt(c.attentionTopicShare) * rng.normal();
      const double d = diff(paper, group, topic);
      for (int q = 1; q <= kQuestionsPerTopic; ++q) {
        const double attention = shared + c.attentionSd * std::sqrt(1 - c.attentionTopicShare) * rng.normal();
        const auto& loc = *std::find_if(locations.begin(), locations.end(), [&](const AnswerLocation& l) {
          return l.paper == paper && l.group == group && l.targetTopic == topic && l.questionIndex == q;
        });
        const double strength = (attention + d + c.gazeNoiseSd * rng.normal()) / strengthSd;
        const auto centre = loc.rect.center();

        for (int k = 0; k < c.distractorsPerAnswer; ++k) {
          const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
          const double x = std::clamp(centre.x + side * (60 + 140 * rng.uniform()), 0.0, kPageWidth);
          const double y = std::clamp(centre.y + 10 * rng.normal(), 0.0, kPageHeight);
          const double dur = c.meanFixationMs * std::exp(c.fixationDurationSd * rng.normal());
          gaze.fixations.push_back({loc.pageIndex, x, y, std::round(dur), eyeBase + rng.normal()});
        }
        const int near = rng.poisson(c.meanFixationsNear * std::exp(c.fixationCountGain * strength));
        for (int k = 0; k < near; ++k) {
          const double r = kNearRadius * std::sqrt(rng.uniform());
          const double a = 2 * std::numbers::pi * rng.uniform();
          const double dur = c.meanFixationMs * std::exp(c.fixationDurationGain * strength +
                                                         c.fixationDurationSd * rng.normal());
          gaze.fixations.push_back(
              {loc.pageIndex, centre.x + r * std::cos(a), centre.y + r * std::sin(a), std::round(dur),
               eyeBase + rng.normal()});
        }

        const double ease = -c.difficultyOnCorrect * d / diffSd;
        const bool correct = attention + ease + c.answerNoiseSd * rng.normal() > threshold;
        const double answerTime =
            std::round(c.meanAnswerTimeMs * std::exp(0.15 * d / std::max(diffSd, 1e-9) + 0.3 * rng.normal()));
        out.answers.push_back({id, paper, group, topic, q, correct, answerTime});
        out.correct += correct ? 1 : 0;
      }
    }
    out.gaze.push_back(std::move(gaze));
  }
  return out;
}

// JSON helpers -------------------------------------------------------------

void writeJson(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json readJson(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parseJson(buf.str(), path.filename().string());
}

std::string groupString(Group g) { return std::string(1, groupLetter(g)); }

Group groupFromJson(const Json& j) {
  const auto s = j.get<std::string>();
  if (s.size() != 1) throw AnalyticsError("group must be A or B");
  return groupFromLetter(s[0]);
}

}  // namespace

ExperimentData synthesizeExperiment(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.valid < 1 || c.valid > c.recruited) throw AnalyticsError("valid participants must be between 1 and recruited");
  if (!(c.targetCorrectRate > 0.5 && c.targetCorrectRate < 1)) throw AnalyticsError("target correct rate must be in (0.5, 1)");
  Random rng(seed);
  ExperimentData data;
  data.seed = seed;

  for (int paper = 1; paper <= kPapers; ++paper) {
    std::vector<PageLayout> pages;
    for (int page = 0; page < kTopicsPerGroup; ++page) {
      PageLayout layout{{kPageWidth, kPageHeight}, std::to_string(page + 1), {}};
      for (Group g : {Group::A, Group::B}) {
        const int topic = page + 1;
        const std::string summary = sentence(rng, 3, 5);
        for (int q = 1; q <= kQuestionsPerTopic; ++q) {
          const auto rect = slotRect(page, slotOf(g, q));
          const auto answerText = sentence(rng, 8, 12);
          layout.textBlocks.push_back({rect, answerText, q == 1, q == kQuestionsPerTopic});
          data.answerLocations.push_back({paper, g, topic, q, page, rect, answerText});
          QuestionItem item{paper, g, topic, q, summary, sentence(rng, 6, 9), {}};
          for (int a = 0; a < 3; ++a) item.answers.push_back(sentence(rng, 1, 3));
          data.questions.push_back(std::move(item));
        }
      }
      pages.push_back(std::move(layout));
    }
    data.papers.emplace_back(std::move(pages), "Paper " + std::to_string(paper));
  }

  const double s = c.difficultySd;
  Difficulty diff{shuffledLevels(rng, {-1.2, -0.4, 0.4, 1.2}, s), shuffledLevels(rng, {-0.7, 0.7}, s),
                  shuffledLevels(rng, {-1.0, 0.0, 1.0}, s)};

  std::vector<std::size_t> ids(static_cast<std::size_t>(c.recruited));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  rng.shuffle(ids);
  std::vector<bool> rejected(ids.size(), false);
  for (std::size_t i = static_cast<std::size_t>(c.valid); i < ids.size(); ++i) rejected[ids[i]] = true;

  const int perParticipant = kPapers * kTopicsPerGroup * kQuestionsPerTopic;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string id = (i + 1 < 10 ? "P0" : "P") + std::to_string(i + 1);
    ParticipantRecord rec{id, 35 + 50 * rng.uniform(), 0.2 + 0.75 * rng.uniform(), 0};
    if (rejected[i]) {
      switch (rng.index(3)) {
        case 0: rec.session1DurationMin = 15 + 13 * rng.uniform(); break;
        case 1: rec.session1DurationMin = 95 + 30 * rng.uniform(); break;
        default: rec.calibrationErrorDeg = 1.1 + 0.8 * rng.uniform(); break;
      }
    }
    auto draw = drawParticipant(rng, id, c, diff, data.answerLocations);
    // Valid participants cleared the 80% bar; redraw the rare one who would not.
    for (int tries = 0; !rejected[i] && 100.0 * draw.correct / perParticipant < kMinCorrectPct && tries < 1000; ++tries) {
      draw = drawParticipant(rng, id, c, diff, data.answerLocations);
    }
    rec.session2CorrectPct = 100.0 * draw.correct / perParticipant;
    data.participants.push_back(rec);
    for (auto& g : draw.gaze) data.gaze.push_back(std::move(g));
    for (auto& a : draw.answers) data.answers.push_back(std::move(a));
  }
  return data;
}

void writeExperiment(const ExperimentData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "papers");
  for (std::size_t i = 0; i < data.papers.size(); ++i) {
    writeJson(dir / "papers" / ("paper" + std::to_string(i + 1) + ".json"), toJson(data.papers[i]));
  }
  Json questions = Json::array();
  for (const auto& q : data.questions) {
    questions.push_back(Json{{"paper", q.paper},
                             {"group", groupString(q.group)},
                             {"targetTopic", q.targetTopic},
                             {"questionIndex", q.questionIndex},
                             {"summary", q.summary},
                             {"question", q.question},
                             {"answers", q.answers}});
  }
  writeJson(dir / "questions.json", questions);

  Json locations = Json::array();
  for (const auto& l : data.answerLocations) {
    locations.push_back(Json{{"paper", l.paper},
                             {"group", groupString(l.group)},
                             {"targetTopic", l.targetTopic},
                             {"questionIndex", l.questionIndex},
                             {"pageIndex", l.pageIndex},
                             {"rect", toJson(l.rect)},
                             {"answerText", l.answerText}});
  }
  writeJson(dir / "answer_locations.json", locations);

  Json participants = Json::array();
  for (const auto& p : data.participants) {
    participants.push_back(Json{{"id", p.id},
                                {"session1DurationMin", p.session1DurationMin},
                                {"calibrationErrorDeg", p.calibrationErrorDeg},
                                {"session2CorrectPct", p.session2CorrectPct}});
  }
  writeJson(dir / "participants.json", participants);

  Json gaze = Json::array();
  for (const auto& g : data.gaze) {
    Json fixations = Json::array();
    for (const auto& f : g.fixations) {
      fixations.push_back(Json{{"page", f.pageIndex}, {"x", f.x}, {"y", f.y}, {"durationMs", f.durationMs},
                               {"distanceCm", f.eyeDistanceCm}});
    }
    gaze.push_back(Json{{"participant", g.participant}, {"paper", g.paper}, {"group", groupString(g.group)},
                        {"fixations", fixations}});
  }
  writeJson(dir / "gaze.json", gaze);

  Json answers = Json::array();
  for (const auto& a : data.answers) {
    answers.push_back(Json{{"participant", a.participant},
                           {"paper", a.paper},
                           {"group", groupString(a.group)},
                           {"targetTopic", a.targetTopic},
                           {"questionIndex", a.questionIndex},
                           {"correct", a.correct},
                           {"answerTimeMs", a.answerTimeMs}});
  }
  writeJson(dir / "answers.json", answers);
  writeJson(dir / "manifest.json", Json{{"seed", data.seed}, {"papers", data.papers.size()}});
}

ExperimentData loadExperiment(const std::filesystem::path& dir) {
  ExperimentData data;
  try {
    data.seed = readJson(dir / "manifest.json").at("seed").get<std::uint64_t>();
    for (int p = 1; p <= kPapers; ++p) {
      data.papers.push_back(layoutFromJson(readJson(dir / "papers" / ("paper" + std::to_string(p) + ".json"))));
    }
    for (const auto& j : readJson(dir / "questions.json")) {
      data.questions.push_back({j.at("paper").get<int>(), groupFromJson(j.at("group")), j.at("targetTopic").get<int>(),
                                j.at("questionIndex").get<int>(), j.at("summary").get<std::string>(),
                                j.at("question").get<std::string>(),
                                j.at("answers").get<std::vector<std::string>>()});
    }
    for (const auto& j : readJson(dir / "answer_locations.json")) {
      AnswerLocation l{j.at("paper").get<int>(),        groupFromJson(j.at("group")),
                       j.at("targetTopic").get<int>(),  j.at("questionIndex").get<int>(),
                       j.at("pageIndex").get<int>(),    rectFromJson(j.at("rect")),
                       j.at("answerText").get<std::string>()};
      l.validate();
      data.answerLocations.push_back(std::move(l));
    }
    for (const auto& j : readJson(dir / "participants.json")) {
      data.participants.push_back({j.at("id").get<std::string>(), j.at("session1DurationMin").get<double>(),
                                   j.at("calibrationErrorDeg").get<double>(), j.at("session2CorrectPct").get<double>()});
    }
    for (const auto& j : readJson(dir / "gaze.json")) {
      ParticipantGaze g{j.at("participant").get<std::string>(), j.at("paper").get<int>(), groupFromJson(j.at("group")),
                        {}};
      for (const auto& f : j.at("fixations")) {
        g.fixations.push_back({f.at("page").get<int>(), f.at("x").get<double>(), f.at("y").get<double>(),
                               f.at("durationMs").get<double>(), f.at("distanceCm").get<double>()});
      }
      data.gaze.push_back(std::move(g));
    }
    for (const auto& j : readJson(dir / "answers.json")) {
      data.answers.push_back({j.at("participant").get<std::string>(), j.at("paper").get<int>(),
                              groupFromJson(j.at("group")), j.at("targetTopic").get<int>(),
                              j.at("questionIndex").get<int>(), j.at("correct").get<bool>(),
                              j.at("answerTimeMs").get<double>()});
    }
  } catch (const Json::exception& e) {
    throw AnalyticsError("malformed experiment data in " + dir.string() + ": " + e.what());
  }
  return data;
}

std::vector<AnswerRecord> buildRecords(const ExperimentData& data, ForwardRule rule, const ViewGeometry& geometry) {
  std::map<std::string, bool> valid;
  for (const auto& p : data.participants) valid[p.id] = isValid(p);
  std::vector<AnswerRecord> records;
  for (const auto& a : data.answers) {
    if (!valid[a.participant]) continue;
    const auto gaze = std::find_if(data.gaze.begin(), data.gaze.end(), [&](const ParticipantGaze& g) {
      return g.participant == a.participant && g.paper == a.paper;
    });
    const auto loc = std::find_if(data.answerLocations.begin(), data.answerLocations.end(), [&](const AnswerLocation& l) {
      return l.paper == a.paper && l.group == a.group && l.targetTopic == a.targetTopic &&
             l.questionIndex == a.questionIndex;
    });
    if (loc == data.answerLocations.end()) throw AnalyticsError("answer without a location");
    std::vector<GazeFixation> near;
    if (gaze != data.gaze.end()) near = fixationsNearAnswer(gaze->fixations, *loc, geometry);
    records.push_back({a.participant, a.paper, a.group, a.targetTopic, a.questionIndex, a.correct, a.answerTimeMs,
                       extractFeatures(near, rule)});
  }
  return records;
}

ExperimentResults runExperiment(const ExperimentData& data, const RunOptions& options) {
  ExperimentResults res;
  res.dataSeed = data.seed;
  res.runSeed = options.seed;
  for (const auto& p : data.participants) {
    const auto reason = rejectionReason(p);
    if (reason.empty()) res.validParticipants.push_back(p.id);
    else res.rejected.emplace_back(p.id, reason);
  }
  const auto records = buildRecords(data, options.forwardRule);
  res.records = records.size();
  if (records.empty()) throw AnalyticsError("no answers from valid participants");
  res.correctRate = static_cast<double>(std::count_if(records.begin(), records.end(),
                                                      [](const AnswerRecord& r) { return r.correct; })) /
                    static_cast<double>(records.size());
  const auto labels = correctnessLabels(records);
  const auto& specs = ClassifierSpec::standard();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    ClassifierResult cr{spec.name, spec.columns, 0, std::nullopt, 0};
    const auto x = designMatrix(records, spec);
    if (std::find(options.permute.begin(), options.permute.end(), spec.name) != options.permute.end()) {
      const auto perm = permutationTest(x, labels, options.nPerm, mixSeed(options.seed, i), options.svm, options.threads);
      cr.auc = perm.observedAuc;
      cr.pValue = perm.pValue;
      cr.nPerm = perm.nPerm;
    } else {
      cr.auc = trainEvaluateLOO(x, labels, options.svm).auc;
    }
    res.classifiers.push_back(std::move(cr));
  }
  return res;
}

Json toJson(const ExperimentResults& r) {
  Json classifiers = Json::array();
  for (const auto& c : r.classifiers) {
    classifiers.push_back(Json{{"name", c.name},
                               {"columns", c.columns},
                               {"auc", c.auc},
                               {"pValue", c.pValue ? Json(*c.pValue) : Json(nullptr)},
                               {"nPerm", c.nPerm}});
  }
  Json rejected = Json::array();
  for (const auto& [id, reason] : r.rejected) rejected.push_back(Json{{"id", id}, {"reason", reason}});
  return Json{{"dataSeed", r.dataSeed},
              {"runSeed", r.runSeed},
              {"records", r.records},
              {"correctRate", r.correctRate},
              {"validParticipants", r.validParticipants},
              {"rejectedParticipants", rejected},
              {"classifiers", classifiers}};
}

ExperimentResults resultsFromJson(const Json& j) {
  ExperimentResults r;
  try {
    r.dataSeed = j.at("dataSeed").get<std::uint64_t>();
    r.runSeed = j.at("runSeed").get<std::uint64_t>();
    r.records = j.at("records").get<std::size_t>();
    r.correctRate = j.at("correctRate").get<double>();
    r.validParticipants = j.at("validParticipants").get<std::vector<std::string>>();
    for (const auto& x : j.at("rejectedParticipants")) {
      r.rejected.emplace_back(x.at("id").get<std::string>(), x.at("reason").get<std::string>());
    }
    for (const auto& c : j.at("classifiers")) {
      ClassifierResult cr{c.at("name").get<std::string>(), c.at("columns").get<std::vector<std::string>>(),
                          c.at("auc").get<double>(), std::nullopt, c.at("nPerm").get<int>()};
      if (!c.at("pValue").is_null()) cr.pValue = c.at("pValue").get<double>();
      r.classifiers.push_back(std::move(cr));
    }
  } catch (const Json::exception& e) {
    throw AnalyticsError(std::string("malformed results: ") + e.what());
  }
  return r;
}

std::string formatResults(const ExperimentResults& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "records %zu, correct %.1f%%, valid participants %zu of %zu\n", r.records,
                r.correctRate * 100, r.validParticipants.size(), r.validParticipants.size() + r.rejected.size());
  out += line;
  out += "classifier  columns     AUC   p\n";
  for (const auto& c : r.classifiers) {
    std::string p = "-";
    if (c.pValue) {
      std::snprintf(line, sizeof line, "%.3f", *c.pValue);
      p = line;
    }
    std::snprintf(line, sizeof line, "%-10s  %7zu  %.3f   %s\n", c.name.c_str(), c.columns.size(), c.auc, p.c_str());
    out += line;
  }
  return out;
}

}  // namespace readtrace::analytics
