// Replaces global allocation with 64-byte aligned blocks. Vectorized kernels
// then split every buffer into the same scalar prefix and packets on each run.

#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlignment = 64;

void* aligned_or_throw(std::size_t size) {
    const std::size_t rounded = size == 0 ? kAlignment : (size + kAlignment - 1) / kAlignment * kAlignment;
    if (void* p = std::aligned_alloc(kAlignment, rounded)) return p;
    throw std::bad_alloc();
}

}  // namespace

void* operator new(std::size_t size) { return aligned_or_throw(size); }
void* operator new[](std::size_t size) { return aligned_or_throw(size); }
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
