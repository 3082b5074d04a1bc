#include "dnerf/common.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

namespace dnerf {

void parallel_for_chunks(std::size_t n_chunks, int threads, const std::function<void(std::size_t)>& fn) {
  if (n_chunks == 0) return;
  std::size_t workers = std::size_t(threads < 1 ? 1 : threads);
  if (workers > n_chunks) workers = n_chunks;
  if (workers == 1) {
    for (std::size_t i = 0; i < n_chunks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto run = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n_chunks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(field, "cannot open file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw ValidationError(field, "cannot stat file: " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw ValidationError(field, "short read: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size) {
  static std::atomic<uint64_t> counter{0};
  const auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const auto tmp = path.string() + ".tmp." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot open for write: " + tmp);
    if (size > 0) out.write(static_cast<const char*>(data), std::streamsize(size));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw PipelineError("short write: " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw PipelineError("rename failed for: " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

}  // namespace dnerf
