// problem: sum-of-evens
use std::io::Read;

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let mut it = input.split_whitespace().map(|t| t.parse::<i64>().unwrap());
    let n = it.next().unwrap() as usize;
    let sum: i64 = it.take(n).filter(|x| x % 2 == 0).sum();
    println!("{}", sum);
}
