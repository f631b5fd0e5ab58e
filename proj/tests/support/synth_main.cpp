// Copyright 2026 The dweNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Writes a synthetic corpus for CLI tests:
//   dwenet_synth headlines OUT.jsonl N_NON N_SARC SEED
//   dwenet_synth sarc OUT.tsv N_NON N_SARC SEED
#include <cstdlib>
#include <iostream>
#include <string>

#include "synthetic.hpp"

int main(int argc, char** argv) {
  if (argc != 6) {
    std::cerr << "usage: dwenet_synth headlines|sarc OUT N_NON N_SARC SEED\n";
    return 2;
  }
  const std::string kind = argv[1];
  const auto examples = dwenet::testing::synthetic_headlines(
      std::stoul(argv[3]), std::stoul(argv[4]), std::stoull(argv[5]));
  if (kind == "headlines") {
    dwenet::testing::write_headlines_jsonl(argv[2], examples);
  } else if (kind == "sarc") {
    dwenet::testing::write_sarc_tsv(argv[2], examples);
  } else {
    std::cerr << "unknown corpus kind " << kind << "\n";
    return 2;
  }
  return 0;
}
