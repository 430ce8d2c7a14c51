// Regenerates the committed synthetic fixtures:
//   make_fixtures [out_dir]   (default data/synthetic)
#include <filesystem>
#include <fstream>
#include <iostream>

#include "choicematch/synthetic.hpp"

namespace fs = std::filesystem;
using namespace choicematch;

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? argv[1] : "data/synthetic";
  fs::create_directories(dir);
  const auto corpus = make_relation_corpus({});
  write_corpus(corpus, (dir / "relations.jsonl").string(), (dir / "catalog.json").string());

  std::ofstream raw(dir / "raw_sentences.txt");
  for (const auto& s : make_raw_sentences({}, corpus)) raw << join_tokens(s) << '\n';
  std::cout << "wrote " << corpus.instances.size() << " instances and raw sentences to " << dir.string()
            << '\n';
}
