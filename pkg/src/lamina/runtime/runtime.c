/* Memory manager and built-in operations for compiled programs.
 *
 * The heap is two equal semispaces.  Allocation bumps a pointer in the
 * active space; when an allocation does not fit, live objects are
 * copied into the other space and the roles swap.  Roots are the words
 * of the global region plus the stack region between the caller's
 * argument block and the base frame.  Compiled code keeps that region
 * pure: every word there is a value encoding, a return address, or a
 * saved frame pointer, and the latter two never point into the heap,
 * so an address-range test suffices to recognize references.
 *
 * Copying uses the usual two-finger scheme: forwarding is recorded by
 * overwriting an object's header with the new payload address.  Tags
 * occupy the low byte of a header and are never 0 mod 8, while payload
 * addresses are 8-aligned, so the two states cannot be confused.  The
 * scan pass treats all payload words uniformly: integer encodings are
 * odd, a closure's code address and a constructor's tag word fall
 * outside the heap range, and only genuine references get rewritten.
 *
 * The vacated space is zeroed after every collection so heap contents
 * stay a deterministic function of the program and its input.
 */
#include <inttypes.h>
#include <stdarg.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "runtime.h"

#define DEFAULT_SPACE_BYTES (1 << 20)

static word *space[2];
static size_t space_words;
static int active;
static word *alloc_ptr;
static word *stack_bottom;
static word *globals_start;
static word *globals_end;
static int debug_checks;

int64_t rt_gc_runs;
int64_t rt_gc_objects;
int64_t rt_gc_bytes;

static inline word enc(int64_t v) { return ((word)v << 1) | 1; }
static inline int64_t dec(word w) { return (int64_t)w >> 1; }

void rt_fail(const char *msg)
{
    fflush(stdout);
    fprintf(stderr, "lamina: runtime failure: %s\n", msg);
    exit(3);
}

static void rt_failf(const char *fmt, ...) __attribute__((noreturn));

static void rt_failf(const char *fmt, ...)
{
    char buf[256];
    va_list ap;
    va_start(ap, fmt);
    vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    rt_fail(buf);
}

void rt_wrongargs(int64_t expected, int64_t got)
{
    rt_failf("wrong number of arguments: expected %" PRId64
             ", got %" PRId64, expected, got);
}

void rt_init(word *bottom, word *gstart, word *gend)
{
    const char *env = getenv("LAMINA_HEAP_BYTES");
    size_t bytes = DEFAULT_SPACE_BYTES;
    if (env != NULL) {
        long long v = atoll(env);
        if (v >= 4096)
            bytes = (size_t)v;
    }
    space_words = bytes / 8;
    space[0] = calloc(space_words, 8);
    space[1] = calloc(space_words, 8);
    if (space[0] == NULL || space[1] == NULL)
        rt_fail("out of memory");
    active = 0;
    alloc_ptr = space[0];
    stack_bottom = bottom;
    globals_start = gstart;
    globals_end = gend;
    env = getenv("LAMINA_GC_DEBUG");
    debug_checks = env != NULL && env[0] == '1';
}

int64_t rt_heap_used(void)
{
    return (alloc_ptr - space[active]) * 8;
}

static int64_t payload_words(word header)
{
    int64_t tag = header & 0xFF;
    int64_t len = (int64_t)(header >> 8);
    if (tag == LAMINA_TAG_STRING)
        return (len + 8) / 8; /* len bytes plus a terminator, padded */
    return len;
}

/* -- collection ---------------------------------------------------------- */

static word *to_space;
static word *to_ptr;

static word copy_value(word v)
{
    word *from = space[active];
    word *p;
    word header;
    int64_t tag;
    int64_t words;
    word *np;

    if (v & 1)
        return v;
    if (v & 7)
        return v; /* buffer starts are 8-aligned */
    p = (word *)v;
    if (p <= from || p >= from + space_words)
        return v; /* code address, stack address, or read-only data */
    header = p[-1];
    if ((header & 7) == 0)
        return header; /* forwarded: header holds the new payload */
    tag = header & 0xFF;
    if (tag < 1 || tag > 4)
        return v; /* no valid header: not a buffer start */
    words = payload_words(header);
    to_ptr[0] = header;
    np = to_ptr + 1;
    memcpy(np, p, (size_t)words * 8);
    to_ptr += words + 1;
    p[-1] = (word)np;
    rt_gc_objects += 1;
    rt_gc_bytes += (words + 1) * 8;
    return (word)np;
}

static void verify_space(void)
{
    word *scan = to_space;
    while (scan < to_ptr) {
        word header = *scan;
        int64_t tag = header & 0xFF;
        int64_t words = payload_words(header);
        int64_t i;
        if (tag < 1 || tag > 4 || scan + words + 1 > to_ptr) {
            fprintf(stderr, "lamina: heap check failed\n");
            abort();
        }
        if (tag != LAMINA_TAG_STRING) {
            for (i = 0; i < words; i++) {
                word w = scan[1 + i];
                if (!(w & 1) && (word *)w >= space[active]
                        && (word *)w < space[active] + space_words) {
                    fprintf(stderr, "lamina: dangling reference\n");
                    abort();
                }
            }
        }
        scan += words + 1;
    }
}

void rt_collect(word *scan_top)
{
    word *scan;
    word *p;

    to_space = space[1 - active];
    to_ptr = to_space;
    rt_gc_runs += 1;

    for (p = globals_start; p < globals_end; p++)
        *p = copy_value(*p);
    for (p = scan_top; p < stack_bottom; p++)
        *p = copy_value(*p);

    scan = to_space;
    while (scan < to_ptr) {
        word header = *scan;
        int64_t tag = header & 0xFF;
        int64_t words = payload_words(header);
        int64_t i;
        if (tag != LAMINA_TAG_STRING)
            for (i = 0; i < words; i++)
                scan[1 + i] = copy_value(scan[1 + i]);
        scan += words + 1;
    }

    if (debug_checks)
        verify_space();
    memset(space[active], 0, space_words * 8);
    active = 1 - active;
    alloc_ptr = to_ptr;
}

static word *alloc(int64_t words, word header, word *scan_top)
{
    word *hdr;
    if (alloc_ptr + words + 1 > space[active] + space_words) {
        rt_collect(scan_top);
        if (alloc_ptr + words + 1 > space[active] + space_words)
            rt_fail("out of memory");
    }
    hdr = alloc_ptr;
    alloc_ptr += words + 1;
    hdr[0] = header;
    return hdr + 1;
}

/* -- constructors --------------------------------------------------------- */

word Bstring(word *template_header, word *scan_top)
{
    int64_t len = (int64_t)(template_header[0] >> 8);
    int64_t words = (len + 8) / 8;
    word *p = alloc(words, ((word)len << 8) | LAMINA_TAG_STRING, scan_top);
    memset(p, 0, (size_t)words * 8);
    memcpy(p, template_header + 1, (size_t)len + 1);
    return (word)p;
}

word Bsexp(int64_t n, word *args)
{
    word *p = alloc(n, ((word)n << 8) | LAMINA_TAG_SEXP, args);
    memcpy(p, args, (size_t)n * 8);
    return (word)p;
}

word Barray(int64_t n, word *args)
{
    word *p = alloc(n, ((word)n << 8) | LAMINA_TAG_ARRAY, args);
    memcpy(p, args, (size_t)n * 8);
    return (word)p;
}

word Bclosure(int64_t n, word *args)
{
    word *p = alloc(n, ((word)n << 8) | LAMINA_TAG_CLOSURE, args);
    memcpy(p, args, (size_t)n * 8);
    return (word)p;
}

/* -- element access ------------------------------------------------------- */

word Belem(int64_t n, word *args)
{
    word v = args[0];
    word ix = args[1];
    word *p;
    word header;
    int64_t tag, len, idx;

    (void)n;
    if (v & 1)
        rt_fail("non-boxed argument");
    if (!(ix & 1))
        rt_fail("non-integer index");
    idx = dec(ix);
    p = (word *)v;
    header = p[-1];
    tag = header & 0xFF;
    len = (int64_t)(header >> 8);
    switch (tag) {
    case LAMINA_TAG_STRING:
        if (idx < 0 || idx >= len)
            rt_failf("index out of bounds: %" PRId64 " (length %" PRId64
                     ")", idx, len);
        return enc(((unsigned char *)p)[idx]);
    case LAMINA_TAG_ARRAY:
        if (idx < 0 || idx >= len)
            rt_failf("index out of bounds: %" PRId64 " (length %" PRId64
                     ")", idx, len);
        return p[idx];
    case LAMINA_TAG_SEXP:
        if (idx < 0 || idx >= len - 1)
            rt_failf("index out of bounds: %" PRId64 " (length %" PRId64
                     ")", idx, len - 1);
        return p[idx + 1];
    default:
        rt_fail("non-boxed argument");
    }
}

word Bsta(int64_t n, word *args)
{
    word v = args[0];
    word ix = args[1];
    word x = args[2];
    word *p;
    word header;
    int64_t tag, len, idx;

    (void)n;
    if (v & 1)
        rt_fail("non-boxed argument");
    if (!(ix & 1))
        rt_fail("non-integer index");
    idx = dec(ix);
    p = (word *)v;
    header = p[-1];
    tag = header & 0xFF;
    len = (int64_t)(header >> 8);
    switch (tag) {
    case LAMINA_TAG_STRING:
        if (idx < 0 || idx >= len)
            rt_failf("index out of bounds: %" PRId64 " (length %" PRId64
                     ")", idx, len);
        if (!(x & 1))
            rt_fail("string element must be an integer");
        ((unsigned char *)p)[idx] = (unsigned char)(dec(x) & 0xFF);
        return x;
    case LAMINA_TAG_ARRAY:
        if (idx < 0 || idx >= len)
            rt_failf("index out of bounds: %" PRId64 " (length %" PRId64
                     ")", idx, len);
        p[idx] = x;
        return x;
    case LAMINA_TAG_SEXP:
        if (idx < 0 || idx >= len - 1)
            rt_failf("index out of bounds: %" PRId64 " (length %" PRId64
                     ")", idx, len - 1);
        p[idx + 1] = x;
        return x;
    default:
        rt_fail("non-boxed argument");
    }
}

/* -- input, output, length ------------------------------------------------ */

word Lread(int64_t n, word *args)
{
    long v;
    (void)n;
    (void)args;
    if (scanf("%ld", &v) != 1)
        rt_fail("read past end of input");
    return enc(v);
}

word Lwrite(int64_t n, word *args)
{
    (void)n;
    if (!(args[0] & 1))
        rt_fail("write of non-integer value");
    printf("%" PRId64 "\n", dec(args[0]));
    return enc(0);
}

word Llength(int64_t n, word *args)
{
    word v = args[0];
    word header;
    int64_t tag, len;

    (void)n;
    if (v & 1)
        rt_fail("non-boxed argument");
    header = ((word *)v)[-1];
    tag = header & 0xFF;
    len = (int64_t)(header >> 8);
    switch (tag) {
    case LAMINA_TAG_STRING:
    case LAMINA_TAG_ARRAY:
        return enc(len);
    case LAMINA_TAG_SEXP:
        return enc(len - 1);
    default:
        rt_fail("non-boxed argument");
    }
}

word Lprintf(int64_t n, word *args)
{
    word fmt = args[0];
    word *fp;
    unsigned char *data;
    int64_t len, i, argi;

    if (fmt & 1)
        rt_fail("printf: format must be a string");
    fp = (word *)fmt;
    if ((fp[-1] & 0xFF) != LAMINA_TAG_STRING)
        rt_fail("printf: format must be a string");
    len = (int64_t)(fp[-1] >> 8);
    data = (unsigned char *)fp;
    argi = 1;
    for (i = 0; i < len; i++) {
        unsigned char c = data[i];
        word arg;
        if (c != '%') {
            putchar(c);
            continue;
        }
        if (i + 1 >= len)
            rt_fail("printf: unknown directive");
        c = data[++i];
        if (c == '%') {
            putchar('%');
            continue;
        }
        if (argi >= n)
            rt_fail("printf: not enough arguments");
        arg = args[argi++];
        if (c == 'd') {
            if (!(arg & 1))
                rt_fail("printf: %d applied to non-integer");
            printf("%" PRId64, dec(arg));
        } else if (c == 's') {
            word *sp = (word *)arg;
            if ((arg & 1) || (sp[-1] & 0xFF) != LAMINA_TAG_STRING)
                rt_fail("printf: %s applied to non-string");
            fwrite(sp, 1, (size_t)(sp[-1] >> 8), stdout);
        } else if (c == 'c') {
            if (!(arg & 1))
                rt_fail("printf: %c applied to non-integer");
            putchar((int)(dec(arg) & 0xFF));
        } else {
            rt_fail("printf: unknown directive");
        }
    }
    return enc(0);
}
