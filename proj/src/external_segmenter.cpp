#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "binsight/errors.hpp"
#include "binsight/segment.hpp"

extern char** environ;

namespace binsight {

namespace {

constexpr std::size_t kStderrTail = 4096;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

void close_fd(int& fd) noexcept {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

std::vector<std::uint8_t> encode_request(const DepthMap& dm) {
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + 4 * dm.size());
  out.insert(out.end(), kFrameMagic, kFrameMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(dm.width));
  put_u32(out, static_cast<std::uint32_t>(dm.height));
  for (const float h : dm.heights) put_u32(out, std::bit_cast<std::uint32_t>(h));
  return out;
}

LabelMask decode_response(std::span<const std::uint8_t> frame, int expected_w, int expected_h) {
  if (frame.size() < kFrameHeaderBytes) {
    throw ExternalSegmenterError("response frame shorter than its header");
  }
  if (std::memcmp(frame.data(), kFrameMagic, 4) != 0) {
    throw ExternalSegmenterError("response frame has bad magic");
  }
  const auto w = get_u32(frame, 4), h = get_u32(frame, 8);
  if (w != static_cast<std::uint32_t>(expected_w) || h != static_cast<std::uint32_t>(expected_h)) {
    throw ExternalSegmenterError("response is " + std::to_string(w) + "x" + std::to_string(h) +
                                 ", request was " + std::to_string(expected_w) + "x" +
                                 std::to_string(expected_h));
  }
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (frame.size() != kFrameHeaderBytes + n) {
    throw ExternalSegmenterError("response payload is " +
                                 std::to_string(frame.size() - kFrameHeaderBytes) +
                                 " bytes, expected " + std::to_string(n));
  }
  LabelMask mask = LabelMask::blank(expected_w, expected_h, kNonWorkpiece, true);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t v = frame[kFrameHeaderBytes + i];
    if (v > kWorkpiece) {
      throw ExternalSegmenterError("response label " + std::to_string(v) + " at pixel " +
                                   std::to_string(i) + " is not 0 or 1");
    }
    mask.labels[i] = v;
  }
  return mask;
}

ExternalSegmenter::ExternalSegmenter(ExternalSegmenterConfig config)
    : config_(std::move(config)) {
  if (config_.argv.empty()) throw InvalidArgument("external segmenter command is empty");
  // A child that dies mid-frame must surface as an error, not kill us.
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });
}

ExternalSegmenter::~ExternalSegmenter() { stop(); }

std::string ExternalSegmenter::name() const {
  std::string s = "external:";
  for (const auto& a : config_.argv) s += " " + a;
  return s;
}

void ExternalSegmenter::start() {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) fail("pipe: " + std::string(std::strerror(errno)));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    fail("pipe: " + std::string(std::strerror(errno)));
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    fail("pipe: " + std::string(std::strerror(errno)));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);

  std::vector<char*> argv;
  for (auto& a : config_.argv) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    fail("cannot start '" + config_.argv[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  child_err_ = err_pipe[0];
  for (int fd : {to_child_, from_child_, child_err_}) set_nonblocking(fd);
  stderr_tail_.clear();
}

void ExternalSegmenter::stop() noexcept {
  close_fd(to_child_);
  close_fd(from_child_);
  close_fd(child_err_);
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
  pid_ = -1;
}

void ExternalSegmenter::drain_stderr() noexcept {
  if (child_err_ < 0) return;
  char buf[1024];
  for (;;) {
    const ssize_t n = ::read(child_err_, buf, sizeof buf);
    if (n == 0) close_fd(child_err_);
    if (n <= 0) break;
    stderr_tail_.append(buf, static_cast<std::size_t>(n));
  }
  if (stderr_tail_.size() > kStderrTail) {
    stderr_tail_.erase(0, stderr_tail_.size() - kStderrTail);
  }
}

void ExternalSegmenter::fail(const std::string& what) {
  drain_stderr();
  std::string diag = stderr_tail_;
  if (pid_ > 0) ::kill(pid_, SIGKILL);
  stop();
  throw ExternalSegmenterError(what + (diag.empty() ? "" : "; child stderr: " + diag));
}

LabelMask ExternalSegmenter::run(const DepthMap& dm_r) {
  if (pid_ <= 0) start();
  const auto request = encode_request(dm_r);
  const std::size_t expected = kFrameHeaderBytes + dm_r.size();
  std::vector<std::uint8_t> response;
  response.reserve(expected);
  std::size_t written = 0;
  const auto deadline = std::chrono::steady_clock::now() + config_.timeout;
  bool header_checked = false;

  while (response.size() < expected) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      fail("no complete response within " + std::to_string(config_.timeout.count()) + " ms");
    }
    pollfd fds[3] = {{from_child_, POLLIN, 0}, {child_err_, POLLIN, 0}, {-1, POLLOUT, 0}};
    if (written < request.size()) fds[2].fd = to_child_;
    const int ready = ::poll(fds, 3, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail("poll: " + std::string(std::strerror(errno)));
    }
    if (ready == 0) continue;
    if (fds[1].revents & (POLLIN | POLLHUP)) drain_stderr();
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      std::uint8_t buf[65536];
      const std::size_t want = std::min(sizeof buf, expected - response.size());
      const ssize_t n = ::read(from_child_, buf, want);
      if (n == 0) {
        fail("child closed its output after " + std::to_string(response.size()) + " of " +
             std::to_string(expected) + " response bytes");
      }
      if (n < 0 && errno != EAGAIN && errno != EINTR) {
        fail("read: " + std::string(std::strerror(errno)));
      }
      if (n > 0) response.insert(response.end(), buf, buf + n);
    }
    if (!header_checked && response.size() >= kFrameHeaderBytes) {
      header_checked = true;
      try {
        // Size and magic are known now; check before waiting for the payload.
        std::vector<std::uint8_t> header(response.begin(), response.begin() + kFrameHeaderBytes);
        if (std::memcmp(header.data(), kFrameMagic, 4) != 0) {
          throw ExternalSegmenterError("response frame has bad magic");
        }
        const auto w = get_u32(header, 4), h = get_u32(header, 8);
        if (w != static_cast<std::uint32_t>(dm_r.width) ||
            h != static_cast<std::uint32_t>(dm_r.height)) {
          throw ExternalSegmenterError("response is " + std::to_string(w) + "x" +
                                       std::to_string(h) + ", request was " +
                                       std::to_string(dm_r.width) + "x" +
                                       std::to_string(dm_r.height));
        }
      } catch (const ExternalSegmenterError& e) {
        fail(e.what());
      }
    }
    if (fds[2].fd >= 0 && (fds[2].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(to_child_, request.data() + written, request.size() - written);
      if (n > 0) {
        written += static_cast<std::size_t>(n);
      } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
        fail("child closed its input after " + std::to_string(written) + " of " +
             std::to_string(request.size()) + " request bytes");
      }
    }
  }
  try {
    return decode_response(response, dm_r.width, dm_r.height);
  } catch (const ExternalSegmenterError& e) {
    fail(e.what());
  }
}

}  // namespace binsight
