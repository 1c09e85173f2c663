// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Out-of-process embedding encoders over a line protocol on stdin/stdout.
//
//   request                          reply
//   info                             ok <dimension> <input width> <input height>
//   text <prompt to end of line>     ok <v_1> ... <v_d>
//   image <w> <h> <r g b per pixel>  ok <v_1> ... <v_d>
//   (anything failing)               error <message>
//
// Pixels are row-major in [0,1]. serve_embeddings implements the server
// side for any in-process provider.

#ifndef DUALSPLAT_IO_PROVIDER_HPP_
#define DUALSPLAT_IO_PROVIDER_HPP_

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/segquery.hpp"

namespace dualsplat::io {

namespace detail {

inline std::string format_vector(const std::vector<double>& v) {
  std::string out = "ok";
  char buf[40];
  for (double x : v) {
    std::snprintf(buf, sizeof(buf), " %.17g", x);
    out += buf;
  }
  return out;
}

inline std::vector<double> parse_reply(const std::string& line, int expected) {
  std::istringstream in(line);
  std::string status;
  in >> status;
  if (status == "error") {
    std::string msg;
    std::getline(in, msg);
    throw std::runtime_error("embedding server:" + msg);
  }
  if (status != "ok") throw std::runtime_error("embedding server: malformed reply");
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (expected >= 0 && static_cast<int>(v.size()) != expected) {
    throw std::runtime_error("embedding server: expected " + std::to_string(expected) + " values, got " +
                             std::to_string(v.size()));
  }
  return v;
}

}  // namespace detail

/// Answers requests from `in` until EOF. Errors become `error` replies.
inline void serve_embeddings(EmbeddingProvider& provider, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cmd;
    ls >> cmd;
    try {
      if (cmd == "info") {
        out << "ok " << provider.dimension() << " " << provider.input_width() << " " << provider.input_height();
      } else if (cmd == "text") {
        std::string prompt;
        std::getline(ls, prompt);
        if (!prompt.empty() && prompt[0] == ' ') prompt.erase(0, 1);
        out << detail::format_vector(provider.embed_text(prompt));
      } else if (cmd == "image") {
        int w = 0, h = 0;
        if (!(ls >> w >> h) || w < 1 || h < 1) throw std::invalid_argument("bad image size");
        ImageBuffer img(w, h, 3);
        for (double& v : img.values) {
          if (!(ls >> v)) throw std::invalid_argument("truncated pixel data");
        }
        out << detail::format_vector(provider.embed_image(img));
      } else {
        throw std::invalid_argument("unknown request '" + cmd + "'");
      }
    } catch (const std::exception& e) {
      out << "error " << e.what();
    }
    out << "\n" << std::flush;
  }
}

/// Spawns `/bin/sh -c command` and talks to it over pipes.
class ProcessEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit ProcessEmbeddingProvider(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw std::runtime_error("embedding server: pipe failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw std::runtime_error("embedding server: pipe failed");
    }
    std::signal(SIGPIPE, SIG_IGN);
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("embedding server: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    to_ = fdopen(to_child[1], "w");
    from_ = fdopen(from_child[0], "r");
    try {
      if (!to_ || !from_) throw std::runtime_error("embedding server: fdopen failed");
      const auto info = detail::parse_reply(request("info"), 3);
      dim_ = static_cast<int>(info[0]);
      width_ = static_cast<int>(info[1]);
      height_ = static_cast<int>(info[2]);
      if (dim_ < 1 || width_ < 1 || height_ < 1) throw std::runtime_error("embedding server: bad info reply");
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ~ProcessEmbeddingProvider() override { shutdown(); }

  ProcessEmbeddingProvider(const ProcessEmbeddingProvider&) = delete;
  ProcessEmbeddingProvider& operator=(const ProcessEmbeddingProvider&) = delete;

  int dimension() const override { return dim_; }
  int input_width() const override { return width_; }
  int input_height() const override { return height_; }

  std::vector<double> embed_text(const std::string& prompt) override {
    if (prompt.find('\n') != std::string::npos) throw std::invalid_argument("prompt must be a single line");
    return detail::parse_reply(request("text " + prompt), dim_);
  }

  std::vector<double> embed_image(const ImageBuffer& crop) override {
    if (crop.channels != 3) throw std::invalid_argument("embedding server: crop must be RGB");
    std::string msg = "image " + std::to_string(crop.width) + " " + std::to_string(crop.height);
    char buf[40];
    for (double v : crop.values) {
      std::snprintf(buf, sizeof(buf), " %.17g", v);
      msg += buf;
    }
    return detail::parse_reply(request(msg), dim_);
  }

 private:
  // Closing stdin lets the server exit; then reap it.
  void shutdown() {
    if (to_) std::fclose(to_);
    if (from_) std::fclose(from_);
    to_ = from_ = nullptr;
    if (pid_ > 0) waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

  std::string request(const std::string& line) {
    if (std::fputs(line.c_str(), to_) < 0 || std::fputc('\n', to_) == EOF || std::fflush(to_) != 0) {
      throw std::runtime_error("embedding server: write failed (server exited?)");
    }
    std::string reply;
    int ch;
    while ((ch = std::fgetc(from_)) != EOF && ch != '\n') reply += static_cast<char>(ch);
    if (ch == EOF && reply.empty()) throw std::runtime_error("embedding server: no reply (server exited?)");
    return reply;
  }

  pid_t pid_ = -1;
  std::FILE* to_ = nullptr;
  std::FILE* from_ = nullptr;
  int dim_ = 0;
  int width_ = 0;
  int height_ = 0;
};

}  // namespace dualsplat::io

#endif  // DUALSPLAT_IO_PROVIDER_HPP_
