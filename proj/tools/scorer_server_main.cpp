// SPDX-License-Identifier: Apache-2.0
//
// Serves the synthetic scorer world over the HTTP protocol, for exercising
// the remote backend end to end:
//   promptrl_scorer_server        # prints the bound port, serves until killed
//   promptrl ... --world remote --scorer-port <port>
#include <csignal>
#include <iostream>

#include "promptrl/remote.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }
}  // namespace

int main() {
  promptrl::SyntheticScorerServer server;
  const int port = server.start();
  std::cout << "serving synthetic scorer on 127.0.0.1:" << port << std::endl;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (g_stop == 0) {
    timespec ts{0, 100 * 1000 * 1000};
    nanosleep(&ts, nullptr);
  }
  server.stop();
  return 0;
}
