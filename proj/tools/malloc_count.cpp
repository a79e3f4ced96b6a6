// Linked into binaries built with -Wl,--wrap=malloc,--wrap=free,--wrap=calloc,
// --wrap=realloc so the bench can report allocation counts and the
// live-allocation high-water mark. Binaries without the wrap leave the
// counters at zero.

#include "catgrad/harness.hpp"

#include <cstddef>

extern "C" {

void* __real_malloc(std::size_t size);
void __real_free(void* ptr);
void* __real_calloc(std::size_t count, std::size_t size);
void* __real_realloc(void* ptr, std::size_t size);

void* __wrap_malloc(std::size_t size) {
  catgrad::allocation_on_malloc();
  return __real_malloc(size);
}

void __wrap_free(void* ptr) {
  if (ptr != nullptr) {
    catgrad::allocation_on_free();
  }
  __real_free(ptr);
}

void* __wrap_calloc(std::size_t count, std::size_t size) {
  catgrad::allocation_on_malloc();
  return __real_calloc(count, size);
}

void* __wrap_realloc(void* ptr, std::size_t size) {
  if (ptr == nullptr) {
    catgrad::allocation_on_malloc();
  } else if (size == 0) {
    catgrad::allocation_on_free();
  }
  return __real_realloc(ptr, size);
}

}  // extern "C"
