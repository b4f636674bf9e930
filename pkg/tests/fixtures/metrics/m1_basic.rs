// Two raw declarations, three dereferences, a four-line unsafe block,
// one transmute and two calls inside the block.

fn helper(v: u32) -> u32 {
    v + 1
}

fn read_two(p: *const i32, q: *mut i32) -> u32 {
    let a = 3;
    let b = a * 2;
    let total = unsafe {
        let x = *p * *q + b;
        helper(std::mem::transmute::<i32, u32>(x + *p))
    };
    total
}

fn scale(values: &[u32], k: u32) -> Vec<u32> {
    values.iter().map(|v| v * k).collect()
}

fn main() {
    let mut v = 5;
    let w = 7;
    let r = read_two(&w, &mut v);
    let scaled = scale(&[r, v as u32], 2);
    println!("{:?}", scaled);
}
