#include <map>
#include <string>

#include "eatta/config.hpp"
#include "eatta/error.hpp"

namespace eatta {

namespace {

// Eight shifts of increasing severity, 50 batches of 64 each.
const char* kSuite = R"([domain:rotate-1]
corruption = rotate(0.5)
batches = 50

[domain:noise-1]
corruption = noise(1)
batches = 50

[domain:scale-up]
corruption = scale(1.8)
batches = 50

[domain:rotate-noise-1]
corruption = rotate(0.7)+noise(0.5)
batches = 50

[domain:noise-2]
corruption = noise(1.2)
batches = 50

[domain:scale-down-noise]
corruption = scale(0.6)+noise(0.8)
batches = 50

[domain:rotate-noise-2]
corruption = rotate(0.9)+noise(0.3)
batches = 50

[domain:noise-3]
corruption = noise(1.4)
batches = 50
)";

std::string suite_config(const std::string& mode, const std::string& adapt, const std::string& extra) {
  return "[model]\nhidden = 64,64\n\n[source]\nkind = blobs\nclasses = 10\ndim = 8\nseparation = 2.75\n\n"
         "[episode]\nmode = " +
         mode + "\nbatch_size = 64\n\n" + kSuite + "\n[adapt]\noptimizer = sgd\nlr = 0.1\nmomentum = 0.9\nhistory_k = 1\n" +
         adapt + "\n" + extra + "[run]\nseed = 0\n";
}

std::string suite_config(const std::string& mode, const std::string& extra = "") { return suite_config(mode, "", extra); }

const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> table = {
      {"ctta-suite", suite_config("ctta")},
      {"ftta-suite", suite_config("ftta")},
      {"random-atta", suite_config("ctta", "strategy = random\ntoggles = none\nbuffer_capacity = 256\nreplay_size = 32\n", "")},
      {"components",
       suite_config("ctta", "[grid]\ntoggles = none, PD, PD+CB, PD+GND, PD+GND+EMA, GND, GND+EMA, PD+CB+GND, PD+CB+GND+EMA\n"
                            "seeds = 0,1,2,3,4\n\n")},
      {"budget-sweep", suite_config("ctta", "[grid]\nbudget = 1, 1/3, 1/5, 0\nseeds = 0,1,2,3,4\n\n")},
      {"strategy-sweep",
       suite_config("ctta", "[grid]\nstrategy = ours, max_entropy, least_confidence, min_margin, random\n"
                            "seeds = 0,1,2,3,4\n\n")},
      {"hyper-sweep", suite_config("ctta", "[grid]\nsigma = 0.01,0.02,0.03,0.1,1\nseeds = 0,1,2,3,4\n\n")},
      {"alpha-sweep", suite_config("ctta", "[grid]\nalpha = 0, 0.5, 0.8, 0.9\nseeds = 0,1,2,3,4\n\n")},
      {"toy-appendix",
       "[model]\nhidden = 8\n\n[source]\nkind = blobs\nclasses = 2\ndim = 2\n\n[toy]\nseparation = 4\n"
       "target = shift(0,2)+noise(1.5)\n\n[grid]\nseeds = 0,1,2,3,4\n\n[run]\nseed = 0\n"},
  };
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : presets()) names.push_back(k);
  return names;
}

std::string preset_text(std::string_view name) {
  const auto it = presets().find(std::string(name));
  if (it == presets().end()) {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return it->second;
}

}  // namespace eatta
