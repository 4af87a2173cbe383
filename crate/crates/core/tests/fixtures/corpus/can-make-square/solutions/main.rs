// problem: can-make-square
use std::io::Read;

fn can_make_square(grid: &[Vec<char>]) -> bool {
    for i in 0..2 {
        for j in 0..2 {
            let mut count = 0;
            for a in 0..2 {
                for b in 0..2 {
                    if grid[i + a][j + b] == 'W' {
                        count += 1;
                    }
                }
            }
            if count != 2 {
                return true;
            }
        }
    }
    false
}

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let grid: Vec<Vec<char>> = input.split_whitespace().take(3).map(|r| r.chars().collect()).collect();
    println!("{}", if can_make_square(&grid) { "true" } else { "false" });
}
