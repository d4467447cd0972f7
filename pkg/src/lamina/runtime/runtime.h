#ifndef LAMINA_RUNTIME_H
#define LAMINA_RUNTIME_H

#include <stdint.h>

/* A word is either an integer encoded as 2v+1 or an 8-aligned pointer
 * to an object payload.  The word before the payload holds the header
 * (length << 8) | tag, where length counts bytes for strings and
 * payload words for everything else. */
typedef uint64_t word;

#define LAMINA_TAG_STRING  1
#define LAMINA_TAG_ARRAY   2
#define LAMINA_TAG_SEXP    3
#define LAMINA_TAG_CLOSURE 4

void rt_init(word *stack_bottom, word *globals_start, word *globals_end);
void rt_fail(const char *msg) __attribute__((noreturn));
void rt_wrongargs(int64_t expected, int64_t got) __attribute__((noreturn));
void rt_collect(word *scan_top);

word Bstring(word *template_header, word *scan_top);

word Lread(int64_t n, word *args);
word Lwrite(int64_t n, word *args);
word Lprintf(int64_t n, word *args);
word Llength(int64_t n, word *args);
word Bsexp(int64_t n, word *args);
word Barray(int64_t n, word *args);
word Bclosure(int64_t n, word *args);
word Belem(int64_t n, word *args);
word Bsta(int64_t n, word *args);

/* collection statistics, kept for tests and the stress harness */
extern int64_t rt_gc_runs;
extern int64_t rt_gc_objects;
extern int64_t rt_gc_bytes;
int64_t rt_heap_used(void);

#endif
