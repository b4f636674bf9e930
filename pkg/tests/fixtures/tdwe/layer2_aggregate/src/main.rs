#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_mut, unused_variables, unused_unsafe, unused_assignments)]

mod libc {
    pub type c_char = i8;
    pub type c_int = i32;
    pub type c_long = i64;
}

#[derive(Copy, Clone)]
#[repr(C)]
pub struct point {
    pub x: libc::c_int,
    pub y: libc::c_int,
}

pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl From<&point> for Point {
    fn from(p: &point) -> Self {
        Point { x: p.x, y: p.y }
    }
}

fn manhattan_safe(p: &Point) -> i32 {
    p.x.abs() + p.y.abs()
}

unsafe extern "C" fn manhattan(mut p: *const point) -> libc::c_int {
    if p.is_null() {
        return 0;
    }
    manhattan_safe(&Point::from(&*p))
}

unsafe fn report(mut p: *const point) {
    println!("{}", manhattan(p));
}

fn main() {
    let args: Vec<i32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let p = point { x: args.first().copied().unwrap_or(0), y: args.get(1).copied().unwrap_or(0) };
    unsafe { report(&p as *const point) }
}
