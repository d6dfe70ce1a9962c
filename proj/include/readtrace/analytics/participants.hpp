#pragma once

#include <span>
#include <string>
#include <vector>

namespace readtrace::analytics {

struct ParticipantRecord {
  std::string id;
  double session1DurationMin = 0;
  double calibrationErrorDeg = 0;
  double session2CorrectPct = 0;  // 0-100
};

inline constexpr double kMinSessionMinutes = 30;
inline constexpr double kMaxSessionMinutes = 90;
inline constexpr double kMaxCalibrationErrorDeg = 1.0;
inline constexpr double kMinCorrectPct = 80;

/// Empty when the participant passes every rule, else the first rule broken.
std::string rejectionReason(const ParticipantRecord& p);
bool isValid(const ParticipantRecord& p);
std::vector<ParticipantRecord> rejectParticipants(std::span<const ParticipantRecord> participants);

}  // namespace readtrace::analytics
