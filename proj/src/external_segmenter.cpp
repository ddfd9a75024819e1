#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "promptbench/error.hpp"
#include "promptbench/segmenter.hpp"

extern char** environ;

namespace fs = std::filesystem;

namespace promptbench {
namespace {

constexpr std::size_t kMaxDiagnostics = 8192;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (text.size() > kMaxDiagnostics) text = "..." + text.substr(text.size() - kMaxDiagnostics);
    return text;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

fs::path volume_path(const fs::path& dir, const char* stem, VolumeFormat format) {
    return dir / (std::string(stem) + (format == VolumeFormat::Nifti ? ".nii" : ".raw"));
}

struct ExitStatus {
    bool timed_out = false;
    int code = 0;        // valid when exited normally
    int signal = 0;      // nonzero when killed by a signal
};

ExitStatus spawn_and_wait(const std::vector<std::string>& argv, const fs::path& stdout_log,
                          const fs::path& stderr_log, double timeout_s) {
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, stdout_log.c_str(),
                                     O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, stderr_log.c_str(),
                                     O_WRONLY | O_CREAT | O_TRUNC, 0644);

    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    // Own process group so a timeout also reaches grandchildren.
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);

    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, args[0], &actions, &attr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    if (rc != 0) {
        throw BackendError("cannot start segmenter \"" + argv.front() + "\": " + std::strerror(rc));
    }

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_s));
    auto pause = std::chrono::microseconds(200);
    ExitStatus status;
    for (;;) {
        int wstatus = 0;
        const pid_t done = waitpid(pid, &wstatus, WNOHANG);
        if (done == pid) {
            if (WIFEXITED(wstatus)) status.code = WEXITSTATUS(wstatus);
            if (WIFSIGNALED(wstatus)) status.signal = WTERMSIG(wstatus);
            return status;
        }
        if (done < 0 && errno != EINTR) {
            throw BackendError(std::string("waitpid failed: ") + std::strerror(errno));
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            waitpid(pid, &wstatus, 0);
            status.timed_out = true;
            return status;
        }
        std::this_thread::sleep_for(pause);
        pause = std::min(pause * 2, std::chrono::microseconds(20000));
    }
}

}  // namespace

Mask external_segment(const Volume3& image, const PromptSet& prompts,
                      const ExternalCommand& command, const fs::path& workdir,
                      const ExternalRequest& request, const Mask* gt) {
    if (command.argv.empty()) throw ValidationError("external segmenter command is empty");
    std::error_code ec;
    fs::create_directories(workdir, ec);
    if (ec) throw IoError("cannot create workdir " + workdir.string() + ": " + ec.message());

    for (const char* stale : {"pred.nii", "pred.raw", "pred.json"}) fs::remove(workdir / stale, ec);

    save_volume(image, volume_path(workdir, "image", command.format));
    write_text(workdir / "prompts.json", to_json(prompts).dump(2) + "\n");
    nlohmann::ordered_json req;
    req["tau_mm"] = request.tau_mm;
    req["case_id"] = request.case_id;
    write_text(workdir / "request.json", req.dump(2) + "\n");
    if (command.include_gt) {
        if (gt == nullptr) throw ValidationError("include_gt requested but no ground truth given");
        save_mask(*gt, volume_path(workdir, "gt", command.format));
    }
    if (!command.stub_config.is_null()) {
        write_text(workdir / "stub_config.json", command.stub_config.dump(2) + "\n");
    }

    std::vector<std::string> argv = command.argv;
    argv.push_back("--input");
    argv.push_back(fs::absolute(workdir).string());
    const auto stderr_log = workdir / "stderr.log";
    const auto status =
        spawn_and_wait(argv, workdir / "stdout.log", stderr_log, command.timeout_s);

    if (status.timed_out) {
        throw BackendError("segmenter timed out after " + std::to_string(command.timeout_s) + " s",
                           read_text(stderr_log));
    }
    if (status.signal != 0) {
        throw BackendError("segmenter killed by signal " + std::to_string(status.signal),
                           read_text(stderr_log));
    }
    if (status.code != 0) {
        throw BackendError("segmenter exited with status " + std::to_string(status.code),
                           read_text(stderr_log));
    }

    fs::path pred = volume_path(workdir, "pred", command.format);
    if (!fs::exists(pred)) {
        const auto other = volume_path(workdir, "pred",
                                       command.format == VolumeFormat::Nifti
                                           ? VolumeFormat::RawJson
                                           : VolumeFormat::Nifti);
        if (!fs::exists(other)) {
            throw BackendError("segmenter produced no pred.nii or pred.raw", read_text(stderr_log));
        }
        pred = other;
    }
    Volume3 volume = [&] {
        try {
            return load_volume(pred);
        } catch (const Error& e) {
            throw BackendError(std::string("ill-formed segmenter output: ") + e.what(),
                               read_text(stderr_log));
        }
    }();
    if (volume.dims() != image.dims()) {
        throw BackendError("segmenter output dims do not match the input image",
                           read_text(stderr_log));
    }
    try {
        // Report the prediction on the image grid so metrics see one geometry.
        const auto bits = Mask::from_volume(volume);
        return Mask(image.geometry(), std::vector<std::uint8_t>(bits.data().begin(), bits.data().end()));
    } catch (const ValidationError& e) {
        throw BackendError(std::string("ill-formed segmenter output: ") + e.what(),
                           read_text(stderr_log));
    }
}

}  // namespace promptbench
