/* Standalone collector exerciser with synthetic roots.
 *
 * The harness owns a static word array and registers its end as the
 * stack bottom, so the scanned region [roots, roots+NROOTS) is exactly
 * that array and no real C frame is ever examined.  Every live value is
 * kept in a root slot; the low slots form a staging area used as the
 * argument block for allocating builtins, which keeps the arguments
 * inside the scanned region so a collection triggered mid-call rewrites
 * them like compiled code's operand stack.
 *
 * Structure equality across a collection is checked by fingerprinting:
 * a depth-first walk numbers objects in visit order and hashes tags,
 * lengths, scalar payloads, and back-reference numbers for already
 * visited objects.  The fingerprint is invariant under relocation but
 * sensitive to lost sharing, broken cycles, and any payload change.
 *
 * Usage: harness [seed] [rounds]   (defaults 1 and 1000)
 */
#include <inttypes.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "runtime.h"

#define NROOTS 512
#define STAGE 16 /* slots 0..STAGE-1 stage builtin arguments */

static word roots[NROOTS];
static word globals_none[1];

static int failures;

static void check(int cond, const char *what)
{
    if (!cond) {
        fprintf(stderr, "harness: FAILED: %s\n", what);
        failures += 1;
    }
}

static inline word enc(int64_t v) { return ((word)v << 1) | 1; }
static inline int64_t dec(word w) { return (int64_t)w >> 1; }

static word pack_tag(const char *tag)
{
    word w = 0;
    int i;
    for (i = 0; i < 5 && tag[i] != 0; i++)
        w |= (word)(unsigned char)tag[i] << (8 * i);
    return enc((int64_t)w);
}

static inline word header_of(word v) { return ((word *)v)[-1]; }
static inline int64_t tag_of(word v) { return header_of(v) & 0xFF; }
static inline int64_t len_of(word v) { return (int64_t)(header_of(v) >> 8); }

static void clear_stage(void)
{
    int i;
    for (i = 0; i < STAGE; i++)
        roots[i] = enc(0);
}

static void clear_roots(void)
{
    int i;
    for (i = 0; i < NROOTS; i++)
        roots[i] = enc(0);
}

/* Builders; results must go straight into a root slot. */

static word mk_array(int n, const word *cells)
{
    word r;
    int i;
    for (i = 0; i < n; i++)
        roots[i] = cells[i];
    r = Barray(n, roots);
    clear_stage();
    return r;
}

static word mk_sexp(const char *tag, int n, const word *cells)
{
    word r;
    int i;
    roots[0] = pack_tag(tag);
    for (i = 0; i < n; i++)
        roots[i + 1] = cells[i];
    r = Bsexp(n + 1, roots);
    clear_stage();
    return r;
}

static word mk_string(const char *text)
{
    static word tmpl[64];
    size_t len = strlen(text);
    if (len + 1 > sizeof tmpl - 8)
        len = sizeof tmpl - 9;
    tmpl[0] = ((word)len << 8) | LAMINA_TAG_STRING;
    memcpy(tmpl + 1, text, len + 1);
    return Bstring(tmpl, roots);
}

/* -- fingerprinting -------------------------------------------------------- */

#define VISIT_SLOTS (1 << 17)

static struct { word key; int64_t idx; } visit[VISIT_SLOTS];
static int64_t visit_count;
static int64_t live_bytes;

static void fp_reset(void)
{
    memset(visit, 0, sizeof visit);
    visit_count = 0;
    live_bytes = 0;
}

static int64_t fp_lookup(word key, int insert)
{
    size_t h = (size_t)((key >> 3) * 0x9E3779B97F4A7C15u) % VISIT_SLOTS;
    while (visit[h].key != 0) {
        if (visit[h].key == key)
            return visit[h].idx;
        h = (h + 1) % VISIT_SLOTS;
    }
    if (!insert)
        return -1;
    visit[h].key = key;
    visit[h].idx = visit_count++;
    return -1;
}

static uint64_t fp_mix(uint64_t h, uint64_t v)
{
    h ^= v;
    h *= 0x100000001B3u;
    return h;
}

static uint64_t fp_walk(uint64_t h, word v)
{
    int64_t tag, len, words, i, seen;

    if (v & 1)
        return fp_mix(h, v);
    seen = fp_lookup(v, 1);
    if (seen >= 0)
        return fp_mix(fp_mix(h, 0xB0u), (uint64_t)seen);
    tag = tag_of(v);
    len = len_of(v);
    h = fp_mix(h, (uint64_t)tag);
    h = fp_mix(h, (uint64_t)len);
    if (tag == LAMINA_TAG_STRING) {
        const unsigned char *data = (const unsigned char *)v;
        for (i = 0; i < len; i++)
            h = fp_mix(h, data[i]);
        words = (len + 8) / 8;
    } else {
        for (i = 0; i < len; i++)
            h = fp_walk(h, ((word *)v)[i]);
        words = len;
    }
    live_bytes += (words + 1) * 8;
    return h;
}

static uint64_t fingerprint_roots(void)
{
    uint64_t h = 0xCBF29CE484222325u;
    int i;
    fp_reset();
    for (i = STAGE; i < NROOTS; i++)
        h = fp_walk(fp_mix(h, (uint64_t)i), roots[i]);
    return h;
}

/* -- fixed scenarios ------------------------------------------------------- */

static void test_encoding(void)
{
    uint64_t s = 0x243F6A8885A308D3u;
    int i;
    for (i = 0; i < 100000; i++) {
        int64_t v;
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        v = (int64_t)s >> 1; /* arbitrary 63-bit value */
        if (dec(enc(v)) != v) {
            check(0, "encode/decode round trip");
            return;
        }
    }
    check(1, "encode/decode round trip");
    printf("harness: encoding round trip ok\n");
}

static void test_string_layout(void)
{
    word s;
    const char *p;
    clear_roots();
    roots[STAGE] = mk_string("hello");
    s = roots[STAGE];
    p = (const char *)s;
    check(tag_of(s) == LAMINA_TAG_STRING, "string tag");
    check(len_of(s) == 5, "string header length");
    check(p[5] == 0, "string terminator byte");
    check(strlen(p) == 5, "string C compatibility");
    roots[STAGE + 1] = Llength(1, &roots[STAGE]);
    check(roots[STAGE + 1] == enc(5), "string length builtin");
    printf("harness: string layout ok\n");
}

static void test_empty_array(void)
{
    clear_roots();
    roots[STAGE] = mk_array(0, NULL);
    roots[STAGE + 1] = Llength(1, &roots[STAGE]);
    check(roots[STAGE + 1] == enc(0), "empty array length");
    rt_collect(roots);
    check(tag_of(roots[STAGE]) == LAMINA_TAG_ARRAY, "empty array survives");
    printf("harness: empty array ok\n");
}

static void test_empty_roots(void)
{
    int64_t before;
    int i;
    word cells[3] = { enc(1), enc(2), enc(3) };
    clear_roots();
    for (i = 0; i < 64; i++)
        roots[STAGE] = mk_array(3, cells);
    roots[STAGE] = enc(0);
    before = rt_gc_objects;
    rt_collect(roots);
    check(rt_gc_objects == before, "empty roots copy nothing");
    check(rt_heap_used() == 0, "empty roots reset cursor");
    printf("harness: empty root set ok\n");
}

static void test_chain_copy(void)
{
    int64_t before, expect;
    uint64_t fp1, fp2;
    word cells[2];
    int i;
    clear_roots();
    roots[STAGE] = enc(0);
    for (i = 1; i <= 100; i++) {
        cells[0] = enc(i);
        cells[1] = roots[STAGE];
        roots[STAGE] = mk_sexp("Cons", 2, cells);
    }
    fp1 = fingerprint_roots();
    expect = live_bytes;
    before = rt_gc_objects;
    rt_collect(roots);
    fp2 = fingerprint_roots();
    check(rt_gc_objects - before == 100, "100-node chain copies 100");
    check(fp1 == fp2, "chain fingerprint stable");
    check(rt_heap_used() == expect, "post-collect cursor == live size");
    printf("harness: 100-node chain ok\n");
}

static void test_sharing(void)
{
    int64_t before;
    word cells[3] = { enc(1), enc(2), enc(3) };
    word pair[2];
    clear_roots();
    roots[STAGE] = mk_array(3, cells);
    pair[0] = roots[STAGE];
    pair[1] = roots[STAGE];
    roots[STAGE + 1] = mk_sexp("Pair", 2, pair);
    roots[STAGE] = enc(0);
    before = rt_gc_objects;
    rt_collect(roots);
    check(rt_gc_objects - before == 2, "shared substructure copied once");
    check(((word *)roots[STAGE + 1])[1] == ((word *)roots[STAGE + 1])[2],
          "sharing preserved");
    printf("harness: forwarding dedup ok\n");
}

static void test_cycle(void)
{
    int64_t before;
    word one = enc(0);
    word sta[3];
    clear_roots();
    roots[STAGE] = mk_array(1, &one);
    sta[0] = roots[STAGE];
    sta[1] = enc(0);
    sta[2] = roots[STAGE];
    roots[STAGE + 1] = Bsta(3, sta); /* a[0] := a */
    roots[STAGE + 1] = enc(0);
    before = rt_gc_objects;
    rt_collect(roots);
    check(rt_gc_objects - before == 1, "cycle copies one object");
    check(((word *)roots[STAGE])[0] == roots[STAGE], "self loop preserved");
    printf("harness: cyclic structure ok\n");
}

static void dummy_code(void) {}

static void test_closure_cells(void)
{
    int64_t before;
    word cells[3] = { enc(7), enc(8), enc(9) };
    word parts[3];
    clear_roots();
    roots[STAGE] = mk_array(3, cells);
    parts[0] = (word)&dummy_code;
    parts[1] = roots[STAGE];
    parts[2] = roots[STAGE];
    roots[0] = parts[0];
    roots[1] = parts[1];
    roots[2] = parts[2];
    roots[STAGE + 1] = Bclosure(3, roots);
    clear_stage();
    before = rt_gc_objects;
    rt_collect(roots);
    check(rt_gc_objects - before == 2, "closure and one shared cell");
    check(((word *)roots[STAGE + 1])[0] == (word)&dummy_code,
          "closure code address intact");
    check(((word *)roots[STAGE + 1])[1] == roots[STAGE],
          "closure cell relocated with its object");
    check(((word *)roots[STAGE + 1])[1] == ((word *)roots[STAGE + 1])[2],
          "closure cells share");
    printf("harness: closure object ok\n");
}

static void test_fill_then_alloc(void)
{
    int64_t runs, expect;
    word cells[4] = { enc(1), enc(2), enc(3), enc(4) };
    word keep[2];
    clear_roots();
    roots[STAGE] = mk_array(4, cells);
    keep[0] = enc(42);
    keep[1] = roots[STAGE];
    roots[STAGE + 1] = mk_sexp("Keep", 2, keep);
    runs = rt_gc_runs;
    while (rt_gc_runs == runs)
        roots[STAGE + 2] = mk_array(4, cells); /* garbage each time */
    roots[STAGE + 2] = enc(0);
    check(tag_of(roots[STAGE]) == LAMINA_TAG_ARRAY,
          "live array survives pressure");
    check(((word *)roots[STAGE + 1])[2] == roots[STAGE],
          "live sexp cell tracks relocation");
    fingerprint_roots();
    expect = live_bytes;
    rt_collect(roots);
    check(rt_heap_used() == expect, "cursor equals live size after fill");
    printf("harness: fill-then-allocate ok (%" PRId64 " collections)\n",
           rt_gc_runs);
}

static void test_layout_determinism(void)
{
    uint64_t sig[2];
    int pass, i;
    for (pass = 0; pass < 2; pass++) {
        word base = 0;
        uint64_t h = 0xCBF29CE484222325u;
        word cells[2];
        clear_roots();
        rt_collect(roots);
        check(rt_heap_used() == 0, "layout test starts empty");
        roots[STAGE] = enc(0);
        for (i = 1; i <= 40; i++) {
            cells[0] = enc(i);
            cells[1] = roots[STAGE];
            roots[STAGE] = (i % 3 == 0) ? mk_array(2, cells)
                                        : mk_sexp("Node", 2, cells);
            if (i == 1)
                base = roots[STAGE];
            h = fp_mix(h, roots[STAGE] - base);
        }
        sig[pass] = h;
    }
    check(sig[0] == sig[1], "identical builds share relative layout");
    printf("harness: allocation determinism ok\n");
}

/* -- randomized rounds ----------------------------------------------------- */

static uint64_t rng_state;

static uint64_t rng(void)
{
    rng_state ^= rng_state << 13;
    rng_state ^= rng_state >> 7;
    rng_state ^= rng_state << 17;
    return rng_state;
}

static int live_slot(void)
{
    return STAGE + (int)(rng() % (NROOTS - STAGE));
}

static const char *const TAGS[] = { "Cons", "Node", "Leaf", "Pair", "Box" };
static const char *const TEXTS[] = { "alpha", "bravo", "charlie", "delta" };

static void random_op(void)
{
    int slot = live_slot();
    word cells[8];
    word sta[3];
    word v;
    int n, i;

    switch (rng() % 6) {
    case 0:
        n = (int)(rng() % 7);
        for (i = 0; i < n; i++)
            cells[i] = (rng() % 2) ? enc((int64_t)(rng() % 1000))
                                   : roots[live_slot()];
        roots[slot] = mk_array(n, cells);
        break;
    case 1:
        n = 1 + (int)(rng() % 5);
        for (i = 0; i < n; i++)
            cells[i] = (rng() % 2) ? enc((int64_t)(rng() % 1000))
                                   : roots[live_slot()];
        roots[slot] = mk_sexp(TAGS[rng() % 5], n, cells);
        break;
    case 2:
        roots[slot] = mk_string(TEXTS[rng() % 4]);
        break;
    case 3: /* mutate an element, possibly creating a cycle */
        v = roots[slot];
        if (v & 1)
            break;
        if (tag_of(v) == LAMINA_TAG_STRING) {
            sta[0] = v;
            sta[1] = enc((int64_t)(rng() % len_of(v)));
            sta[2] = enc((int64_t)('a' + rng() % 26));
        } else {
            int64_t logical = len_of(v)
                - (tag_of(v) == LAMINA_TAG_SEXP ? 1 : 0);
            if (logical <= 0)
                break;
            sta[0] = v;
            sta[1] = enc((int64_t)(rng() % logical));
            sta[2] = (rng() % 2) ? roots[live_slot()]
                                 : enc((int64_t)(rng() % 1000));
        }
        Bsta(3, sta);
        break;
    case 4:
        roots[slot] = enc((int64_t)(rng() % 1000));
        break;
    default: /* pure garbage */
        cells[0] = enc(1);
        cells[1] = enc(2);
        for (i = 0; i < 8; i++)
            roots[STAGE - 1] = mk_array(2, cells);
        roots[STAGE - 1] = enc(0);
        break;
    }
}

static void random_rounds(uint64_t seed, int64_t rounds)
{
    int64_t r;
    rng_state = seed ? seed : 1;
    clear_roots();
    for (r = 0; r < rounds; r++) {
        uint64_t fp1, fp2;
        int64_t expect;
        int i;
        for (i = 0; i < 8; i++)
            random_op();
        fp1 = fingerprint_roots();
        expect = live_bytes;
        rt_collect(roots);
        fp2 = fingerprint_roots();
        if (fp1 != fp2 || live_bytes != expect
                || rt_heap_used() != expect) {
            fprintf(stderr, "harness: FAILED: round %" PRId64
                    " fingerprint or live size changed\n", r);
            failures += 1;
            return;
        }
        if (r % 97 == 0) {
            for (i = STAGE; i < NROOTS; i++) {
                word v = roots[i];
                if (!(v & 1) && tag_of(v) == LAMINA_TAG_STRING
                        && strlen((const char *)v) != (size_t)len_of(v)) {
                    check(0, "string stayed C compatible");
                    return;
                }
            }
        }
    }
    printf("harness: %" PRId64 " randomized rounds ok (seed %" PRIu64
           ")\n", rounds, seed);
}

int main(int argc, char **argv)
{
    uint64_t seed = 1;
    int64_t rounds = 1000;
    if (argc > 1)
        seed = (uint64_t)strtoull(argv[1], NULL, 10);
    if (argc > 2)
        rounds = strtoll(argv[2], NULL, 10);

    clear_roots();
    rt_init(roots + NROOTS, globals_none, globals_none);

    test_encoding();
    test_string_layout();
    test_empty_array();
    test_empty_roots();
    test_chain_copy();
    test_sharing();
    test_cycle();
    test_closure_cells();
    test_fill_then_alloc();
    test_layout_determinism();
    random_rounds(seed, rounds);

    if (failures) {
        fprintf(stderr, "harness: %d failure(s)\n", failures);
        return 1;
    }
    printf("harness: all checks passed\n");
    return 0;
}
