#include "readtrace/analytics/participants.hpp"

namespace readtrace::analytics {

std::string rejectionReason(const ParticipantRecord& p) {
  if (p.session1DurationMin < kMinSessionMinutes) return "first session shorter than 30 minutes";
  if (p.session1DurationMin > kMaxSessionMinutes) return "first session longer than 90 minutes";
  if (p.calibrationErrorDeg > kMaxCalibrationErrorDeg) return "calibration error above 1 degree";
  if (p.session2CorrectPct < kMinCorrectPct) return "fewer than 80% correct answers";
  return {};
}

bool isValid(const ParticipantRecord& p) { return rejectionReason(p).empty(); }

std::vector<ParticipantRecord> rejectParticipants(std::span<const ParticipantRecord> participants) {
  std::vector<ParticipantRecord> out;
  for (const auto& p : participants) {
    if (isValid(p)) out.push_back(p);
  }
  return out;
}

}  // namespace readtrace::analytics
