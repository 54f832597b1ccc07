#pragma once

#include <functional>
#include <iosfwd>

namespace CLI {
class App;
}

namespace nodefilter::cli {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

using Runner = std::function<int(Streams)>;

// Each registers a subcommand whose callback stores its runner in `runner`.
void add_tokens_command(CLI::App& app, Runner& runner);
void add_train_command(CLI::App& app, Runner& runner);
void add_synth_command(CLI::App& app, Runner& runner);
void add_verify_command(CLI::App& app, Runner& runner);

}  // namespace nodefilter::cli
