#pragma once

#include <mutex>
#include <shared_mutex>

namespace xrchat {

// Shared mutex that lets a waiting writer in ahead of newly arriving readers.
// glibc's rwlock prefers readers, which starves ingestion under query load.
class WriterPreferringMutex {
public:
    void lock() {
        gate_.lock();
        rw_.lock();
    }
    void unlock() {
        rw_.unlock();
        gate_.unlock();
    }
    void lock_shared() {
        std::lock_guard pass(gate_);
        rw_.lock_shared();
    }
    void unlock_shared() { rw_.unlock_shared(); }

private:
    std::mutex gate_;
    std::shared_mutex rw_;
};

}  // namespace xrchat
