#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "readtrace/analytics/evaluation.hpp"
#include "readtrace/analytics/features.hpp"
#include "readtrace/analytics/participants.hpp"
#include "readtrace/layout.hpp"
#include "readtrace/serialize.hpp"

namespace readtrace::analytics {

inline constexpr int kPapers = 4;
inline constexpr int kTopicsPerGroup = 3;
inline constexpr int kQuestionsPerTopic = 4;

/// Knobs of the synthetic two-session study. Gaze near an answer is driven by
/// attention plus topic difficulty; correctness by attention alone, so only a
/// model that sees both gaze and topic can recover attention.
struct ExperimentConfig {
  int recruited = 12;
  int valid = 7;
  double targetCorrectRate = 0.87;

  double attentionSd = 1.0;          // per participant and question
  double attentionTopicShare = 0.0;  // fraction of attention variance shared within a topic
  double difficultySd = 4.0;         // scale of the paper, group and topic effects
  double answerNoiseSd = 0.3;        // per question, on correctness
  double gazeNoiseSd = 0.05;         // per question, on gaze strength
  double difficultyOnCorrect = 0.2;  // weight of standardized difficulty against correctness

  double meanFixationsNear = 12.0;
  double fixationCountGain = 0.8;
  double meanFixationMs = 230;
  double fixationDurationGain = 0.35;
  double fixationDurationSd = 0.25;  // log scale
  int distractorsPerAnswer = 2;
  double meanAnswerTimeMs = 18000;
};

struct QuestionItem {
  int paper = 1;
  Group group = Group::A;
  int targetTopic = 1;
  int questionIndex = 1;
  std::string summary;
  std::string question;
  std::vector<std::string> answers;  // the first is correct
};

/// First-session gaze of one participant over one paper, in reading order.
struct ParticipantGaze {
  std::string participant;
  int paper = 1;
  Group group = Group::A;
  std::vector<GazeFixation> fixations;
};

struct AnswerRow {
  std::string participant;
  int paper = 1;
  Group group = Group::A;
  int targetTopic = 1;
  int questionIndex = 1;
  bool correct = false;
  double answerTimeMs = 0;
};

struct ExperimentData {
  std::uint64_t seed = 0;
  std::vector<DocumentLayout> papers;
  std::vector<QuestionItem> questions;
  std::vector<AnswerLocation> answerLocations;
  std::vector<ParticipantRecord> participants;
  std::vector<ParticipantGaze> gaze;
  std::vector<AnswerRow> answers;
};

ExperimentData synthesizeExperiment(const ExperimentConfig& config, std::uint64_t seed);

void writeExperiment(const ExperimentData& data, const std::filesystem::path& dir);
ExperimentData loadExperiment(const std::filesystem::path& dir);

/// One record per answer of a valid participant, with gaze features from the
/// fixations near that question's answer location.
std::vector<AnswerRecord> buildRecords(const ExperimentData& data, ForwardRule rule = ForwardRule::readingOrder,
                                       const ViewGeometry& geometry = {});

struct RunOptions {
  int nPerm = 1000;
  std::uint64_t seed = 1;
  std::vector<std::string> permute = {"Eye", "Topic", "All"};  // classifiers that get a p-value
  SvmOptions svm;
  unsigned threads = 0;
  ForwardRule forwardRule = ForwardRule::readingOrder;
};

struct ClassifierResult {
  std::string name;
  std::vector<std::string> columns;
  double auc = 0;
  std::optional<double> pValue;
  int nPerm = 0;
};

struct ExperimentResults {
  std::uint64_t dataSeed = 0;
  std::uint64_t runSeed = 0;
  std::size_t records = 0;
  double correctRate = 0;
  std::vector<std::string> validParticipants;
  std::vector<std::pair<std::string, std::string>> rejected;  // id, reason
  std::vector<ClassifierResult> classifiers;
};

ExperimentResults runExperiment(const ExperimentData& data, const RunOptions& options = {});

Json toJson(const ExperimentResults& results);
ExperimentResults resultsFromJson(const Json& j);
std::string formatResults(const ExperimentResults& results);

}  // namespace readtrace::analytics
