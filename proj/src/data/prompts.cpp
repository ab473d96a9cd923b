#include "omni/data/prompts.hpp"

#include <algorithm>

namespace omni {

const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Caption: return "caption";
    case TaskKind::OpenQa: return "open_qa";
    case TaskKind::OptionQa: return "option_qa";
    case TaskKind::Region: return "region";
    case TaskKind::Imu: return "imu";
    case TaskKind::Fmri: return "fmri";
  }
  throw ArgError("bad task tag");
}

TaskKind task_from_name(const std::string& s) {
  for (TaskKind t : {TaskKind::Caption, TaskKind::OpenQa, TaskKind::OptionQa,
                     TaskKind::Region, TaskKind::Imu, TaskKind::Fmri})
    if (s == task_name(t)) return t;
  throw ArgError("unknown task '" + s + "'");
}

TaskKind caption_task_for(Modality m) {
  if (m == Modality::Imu) return TaskKind::Imu;
  if (m == Modality::Fmri) return TaskKind::Fmri;
  return TaskKind::Caption;
}

std::string render_prompt(TaskKind task, Modality modality,
                          const std::string& question, const std::string& options) {
  switch (task) {
    case TaskKind::Caption:
      return std::string("Provide a one-sentence caption for the provided ") +
             modality_phrase(modality) + ".";
    case TaskKind::OpenQa:
      if (question.empty()) throw ArgError("open_qa prompt needs a question");
      return question + " Answer the question using a single word or phrase.";
    case TaskKind::OptionQa:
      if (question.empty() || options.empty())
        throw ArgError("option_qa prompt needs a question and options");
      // no trailing period: kept verbatim from the template this mirrors
      return question + " " + options +
             " Answer with the option's letter from the given choices directly";
    case TaskKind::Region:
      return "Provide a short description for this region.";
    case TaskKind::Imu:
      return "Describe the motion.";
    case TaskKind::Fmri:
      return "Describe this scene based on fMRI data.";
  }
  throw ArgError("bad task tag");
}

std::string format_options(const std::vector<std::string>& options) {
  if (options.size() != 4) throw ArgError("option sets have exactly 4 entries");
  std::string out;
  for (size_t i = 0; i < 4; ++i) {
    if (i) out += " ";
    out += "(";
    out += static_cast<char>('A' + i);
    out += ") " + options[i];
  }
  return out;
}

OptionSet build_options(const QaItem& qa, Rng& rng) {
  const auto& vocab = answer_vocab();
  std::vector<std::string> pool;
  for (const auto& w : vocab)
    if (w != qa.answer) pool.push_back(w);
  OptionSet set;
  std::vector<std::string> distractors;
  for (int i = 0; i < 3; ++i) {
    size_t pick = static_cast<size_t>(rng.next_below(pool.size()));
    distractors.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  set.gold = static_cast<int>(rng.next_below(4));
  set.options = distractors;
  set.options.insert(set.options.begin() + set.gold, qa.answer);
  return set;
}

}  // namespace omni
