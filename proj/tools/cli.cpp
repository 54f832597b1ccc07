#include "cli.hpp"

#include <ostream>
#include <vector>

#include <CLI11.hpp>

#include "cli_common.hpp"
#include "commands.hpp"

namespace nodefilter::cli {

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polynomial-token graph filtering: token precompute, training, synthetic filter fitting", "nodefilter"};
  app.require_subcommand(1);
  Runner runner;
  add_tokens_command(app, runner);
  add_train_command(app, runner);
  add_synth_command(app, runner);
  add_verify_command(app, runner);

  std::vector<std::string> reversed;
  for (std::size_t i = args.size(); i > 1; --i) reversed.push_back(args[i - 1]);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  if (!runner) return kInputError;
  return guarded(err, [&] { return runner(Streams{out, err}); });
}

}  // namespace nodefilter::cli
