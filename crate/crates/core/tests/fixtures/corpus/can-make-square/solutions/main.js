// problem: can-make-square
function canMakeSquare(grid) {
  for (let i = 0; i < 2; i++) {
    for (let j = 0; j < 2; j++) {
      let whites = 0;
      for (let a = 0; a < 2; a++) {
        for (let b = 0; b < 2; b++) {
          if (grid[i + a][j + b] === "W") whites++;
        }
      }
      if (whites !== 2) return true;
    }
  }
  return false;
}

const grid = require("fs").readFileSync(0, "utf8").split(/\s+/).filter((s) => s.length > 0).slice(0, 3);
console.log(canMakeSquare(grid) ? "true" : "false");
