#![allow(static_mut_refs)]

mod libc {
    pub type c_int = i32;
}

pub struct Table {
    pub slots: [i32; 4],
    pub used: usize,
}

// read-only, literal initialiser
static mut LIMIT: libc::c_int = 8;
// read-only, computed initialiser
static mut BANNER: &str = concat!("tally", "-", "1");
// written once during start-up
static mut VERBOSE: bool = false;
// scalar with several writes
static mut HITS: usize = 0;
// aggregate with several writes
static mut TABLE: Table = Table { slots: [0; 4], used: 0 };
// counter bumped from a signal handler
static mut CAUGHT: libc::c_int = 0;
// aggregate touched from a signal handler
static mut PENDING: Table = Table { slots: [0; 4], used: 0 };

extern "C" fn on_signal(sig: libc::c_int) {
    note(sig);
}

fn note(sig: libc::c_int) {
    unsafe {
        CAUGHT += 1;
        PENDING.slots[0] = sig;
        PENDING.used = 1;
    }
}

fn signal(_sig: libc::c_int, _handler: extern "C" fn(libc::c_int)) {}

fn record(v: i32) {
    unsafe {
        HITS += 1;
        if TABLE.used < 4 {
            TABLE.slots[TABLE.used] = v;
            TABLE.used += 1;
        }
        HITS = HITS.max(1);
    }
}

fn main() {
    signal(2, on_signal);
    let args: Vec<String> = std::env::args().skip(1).collect();
    unsafe {
        VERBOSE = args.iter().any(|a| a == "-v");
        for (i, a) in args.iter().enumerate() {
            if (i as libc::c_int) < LIMIT {
                record(a.len() as i32);
            }
        }
        if VERBOSE {
            println!("{}", BANNER);
        }
        println!("{} {} {} {}", HITS, TABLE.used, CAUGHT, PENDING.used);
    }
}
