// problem: running-average
use std::io::Read;

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let mut it = input.split_whitespace().map(|t| t.parse::<i64>().unwrap());
    let n = it.next().unwrap() as usize;
    let mut total = 0i64;
    let mut out = String::new();
    for (i, x) in it.take(n).enumerate() {
        total += x;
        out.push_str(&format!("{:.6}\n", total as f64 / (i + 1) as f64));
    }
    print!("{}", out);
}
