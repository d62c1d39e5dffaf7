/** Board view model: server text rows in, cell grid out.
 *
 * The server renders positions as ten 9-character rows, rank 10 first,
 * uppercase for Red.  Coordinate text letters run i..a left to right
 * from Red's seat and rank 10 is written 0, so square "i1" is Red's
 * left corner.  Everything here is coordinate mapping and glyph
 * lookup; legality always comes from the server.
 */

export type SideName = 'Red' | 'Black';

export interface Cell {
  code: string; // server character, '.' for empty
  glyph: string; // display character, '' for empty
  side: SideName | null;
  square: string; // coordinate text, e.g. "h3"
  selected: boolean;
  highlighted: boolean;
  lastFrom: boolean;
  lastTo: boolean;
}

export interface RenderOptions {
  orientation: SideName;
  selected?: string | null;
  highlights?: Iterable<string>;
  lastMove?: string | null; // 4-character move text
}

const GLYPHS: Record<string, string> = {
  K: '帥', A: '仕', E: '相', H: '傌', R: '俥', C: '炮', P: '兵',
  k: '將', a: '士', e: '象', h: '馬', r: '車', c: '砲', p: '卒',
};

export const ROWS = 10;
export const COLS = 9;

/** Coordinate text of the cell at server grid position (row 0 = rank 10). */
export function squareAt(row: number, col: number): string {
  if (row < 0 || row >= ROWS || col < 0 || col >= COLS) {
    throw new RangeError(`no square at row ${row}, col ${col}`);
  }
  const letter = String.fromCharCode(97 + 8 - col);
  const rank = 10 - row;
  return `${letter}${rank % 10}`;
}

/** Server grid position of a coordinate square. */
export function gridAt(square: string): { row: number; col: number } {
  if (!/^[a-i]\d$/.test(square)) {
    throw new RangeError(`bad square text ${JSON.stringify(square)}`);
  }
  const col = 8 - (square.charCodeAt(0) - 97);
  const digit = Number(square[1]);
  const rank = digit === 0 ? 10 : digit;
  return { row: 10 - rank, col };
}

/** Split 4-character move text into its two squares. */
export function moveSquares(move: string): { from: string; to: string } {
  if (move.length !== 4) {
    throw new RangeError(`bad move text ${JSON.stringify(move)}`);
  }
  return { from: move.slice(0, 2), to: move.slice(2, 4) };
}

function sideOf(code: string): SideName | null {
  if (code === '.') return null;
  return code === code.toUpperCase() ? 'Red' : 'Black';
}

/**
 * Build the display grid.  Index [0][0] is the top-left cell as drawn,
 * i.e. the far left of the opponent's back rank for either orientation.
 */
export function renderModel(rows: readonly string[], opts: RenderOptions): Cell[][] {
  if (rows.length !== ROWS || rows.some((r) => r.length !== COLS)) {
    throw new RangeError('expected 10 rows of 9 characters');
  }
  const highlights = new Set(opts.highlights ?? []);
  const last = opts.lastMove ? moveSquares(opts.lastMove) : null;
  const flipped = opts.orientation === 'Black';

  const grid: Cell[][] = [];
  for (let dr = 0; dr < ROWS; dr++) {
    const line: Cell[] = [];
    for (let dc = 0; dc < COLS; dc++) {
      const row = flipped ? ROWS - 1 - dr : dr;
      const col = flipped ? COLS - 1 - dc : dc;
      const code = rows[row][col];
      const square = squareAt(row, col);
      line.push({
        code,
        glyph: GLYPHS[code] ?? '',
        side: sideOf(code),
        square,
        selected: opts.selected === square,
        highlighted: highlights.has(square),
        lastFrom: last !== null && last.from === square,
        lastTo: last !== null && last.to === square,
      });
    }
    grid.push(line);
  }
  return grid;
}

/** Compact text form of a rendered grid, one display row per line. */
export function boardLines(grid: readonly Cell[][]): string[] {
  return grid.map((row) => row.map((cell) => cell.code).join(''));
}
