#include <signal.h>
#include <stdio.h>
#include <string.h>

struct record {
    const char *name;
    int len;
};

struct pair_buf {
    int *data;
    int n;
};

static int counter = 0;
static int sig_seen = 0;
static int verbose = 0;

int str_len(const char *s) {
    int n = 0;
    while (s[n] != '\0') n++;
    return n;
}

int count_char(const char *s, char c) {
    int k = 0;
    for (; *s; s++) if (*s == c) k++;
    return k;
}

int sum_buf(const int *buf, int n) {
    int t = 0;
    for (int i = 0; i < n; i++) t += buf[i];
    return t;
}

int max_of(int a, int b) { return a > b ? a : b; }
int min_of(int a, int b) { return a < b ? a : b; }
int clamp_val(int v, int lo, int hi) { return max_of(lo, min_of(v, hi)); }

void fill_buf(int *buf, int n, int v) {
    for (int i = 0; i < n; i++) buf[i] = v + i;
}

unsigned checksum(const char *s) {
    unsigned h = 5381;
    while (*s) h = h * 33 + (unsigned char)*s++;
    return h;
}

int pb_total(const struct pair_buf *p) { return sum_buf(p->data, p->n); }
int record_len(const struct record *r) { return r->len; }

int bump_counter(void) {
    counter += 1;
    return counter;
}

void on_signal(int sig) { sig_seen = sig; }

void legacy_dump(void) { puts("legacy"); }

void print_stats(const char *s) {
    int id = bump_counter();
    printf("%d %s len=%d e=%d sum=%u\n", id, s, str_len(s), count_char(s, 'e'), checksum(s));
    if (verbose) printf("  verbose\n");
}

int main(int argc, char **argv) {
    int buf[4];
    struct pair_buf pb = {buf, 4};
    struct record r = {"tally", 5};
    void *fp = (void *)max_of;
    if (fp == NULL) return 1;
    signal(SIGUSR1, on_signal);
    verbose = argc > 3;
    fill_buf(buf, 4, argc);
    for (int i = 1; i < argc; i++) print_stats(argv[i]);
    printf("total=%d clamp=%d rec=%d sig=%d\n", pb_total(&pb), clamp_val(sum_buf(buf, 4), 0, 20), record_len(&r), sig_seen);
    return argc > 1 ? 0 : 2;
}
