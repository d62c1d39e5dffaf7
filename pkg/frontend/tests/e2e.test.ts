/**
 * Scripted live session against the real server: train a toy checkpoint
 * through the command-line pipeline, boot the HTTP service on a loopback
 * port, and play through the client exactly as a browser would.
 *
 * Board text is only ever taken from server responses.  The test's one
 * piece of private arithmetic, applyText, moves a single character
 * between squares so the client can check that each reply changed the
 * board by exactly one model-side move.
 */
import { execFileSync, spawn, ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { Window } from 'happy-dom';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { Api, ApiError } from '../src/api.js';
import { PlayApp } from '../src/app.js';
import { gridAt, moveSquares } from '../src/board.js';

const PYTHON = process.env.XQMIMIC_PYTHON ?? 'python3';

let work: string;
let server: ChildProcess | null = null;
let base = '';

function cli(...args: string[]): void {
  execFileSync(PYTHON, ['-m', 'xqmimic.cli', ...args], { stdio: 'pipe' });
}

async function startServer(modelsDir: string): Promise<string> {
  const proc = spawn(PYTHON, [
    '-m', 'xqmimic.cli', 'serve', '--models-dir', modelsDir, '--addr', '127.0.0.1:0',
  ]);
  server = proc;
  let text = '';
  const port = await new Promise<string>((resolve, reject) => {
    const deadline = setTimeout(
      () => reject(new Error(`server never came up:\n${text}`)), 30_000);
    proc.stderr!.on('data', (chunk: Buffer) => {
      text += chunk.toString();
      const hit = /Uvicorn running on http:\/\/127\.0\.0\.1:(\d+)/.exec(text);
      if (hit) {
        clearTimeout(deadline);
        resolve(hit[1]);
      }
    });
    proc.on('exit', (code) => {
      clearTimeout(deadline);
      reject(new Error(`server exited with ${code}:\n${text}`));
    });
  });
  return `http://127.0.0.1:${port}`;
}

function applyText(rows: string[], move: string): string[] {
  const { from, to } = moveSquares(move);
  const f = gridAt(from);
  const t = gridAt(to);
  const grid = rows.map((row) => row.split(''));
  grid[t.row][t.col] = grid[f.row][f.col];
  grid[f.row][f.col] = '.';
  return grid.map((row) => row.join(''));
}

beforeAll(async () => {
  work = mkdtempSync(join(tmpdir(), 'play-ui-'));
  const corpus = join(work, 'corpus.txt');
  const data = join(work, 'data');
  const models = join(work, 'models');
  cli('synth', '--games', '12', '--plies', '30', '--salt', '3', '--elo', '1050',
      '--seed', '0', '--out', corpus);
  cli('ingest', corpus, '--output', data);
  cli('prepare', data, '--bins', '1000:1100', '--memory', '5',
      '--ratios', '0.8,0.2,0.0', '--seed', '1');
  cli('train', '--dataset', data, '--bin', '(1000,1100]', '--seed', '2',
      '--set', 'num_fc=0', '--hidden', '32', '--embed-dim', '16',
      '--learning-rate', '0.01', '--batch-size', '32', '--max-epochs', '4',
      '--out', join(models, 'imitator.xqm'));
  base = await startServer(models);

  // the app only needs a document; requests go out through node's fetch
  const win = new Window();
  (globalThis as { document?: unknown }).document = win.document;
});

afterAll(async () => {
  if (server) {
    server.kill('SIGTERM');
    await new Promise((resolve) => {
      const hard = setTimeout(() => {
        server!.kill('SIGKILL');
        resolve(null);
      }, 5_000);
      server!.on('exit', () => {
        clearTimeout(hard);
        resolve(null);
      });
    });
  }
  rmSync(work, { recursive: true, force: true });
});

describe('scripted browser session', () => {
  it('plays ten rounds, survives an illegal attempt, and matches the replay', async () => {
    const api = new Api(base);
    const root = document.createElement('div');
    document.body.appendChild(root);
    const app = new PlayApp(root, api);
    await app.init();

    // model picker filled from GET /models
    const picker = root.querySelector('.pick-model') as HTMLSelectElement;
    expect(picker.options.length).toBe(1);
    expect(picker.value).toBe('imitator');

    await app.newGame();
    const session = app.session!;
    expect(session.status).toBe('Ongoing');
    expect(session.history).toHaveLength(0);

    // ten legal human moves, ten model replies
    let replies = 0;
    for (let round = 0; round < 10; round++) {
      const view = app.session!;
      expect(view.turn).toBe('Red');
      const move = view.legal_moves[0];
      const before = view.board;
      const { from, to } = moveSquares(move);

      await app.clickSquare(from);
      expect(app.selectedSquare).toBe(from);
      await app.clickSquare(to);

      const after = app.session!;
      expect(after.status).toBe('Ongoing');
      expect(after.history).toHaveLength(2 * (round + 1));
      const [humanEntry, modelEntry] = after.history.slice(-2);
      expect(humanEntry.mover).toBe('human');
      expect(humanEntry.iccs).toBe(move);
      expect(modelEntry.mover).toBe('model');
      replies += 1;

      // the board advanced by exactly the two reported moves, and the
      // reply picked up a Black piece
      const betweenMoves = applyText(before, move);
      const replyFrom = gridAt(moveSquares(modelEntry.iccs).from);
      const picked = betweenMoves[replyFrom.row][replyFrom.col];
      expect(picked).not.toBe('.');
      expect(picked).toBe(picked.toLowerCase());
      expect(after.board).toEqual(applyText(betweenMoves, modelEntry.iccs));
    }
    expect(replies).toBe(10);

    // one illegal attempt: a legal move's origin aimed at an empty square
    // the server never listed for it (clicking an own piece would only
    // re-select, so the bad destination must not hold a Red piece)
    const view = app.session!;
    const origin = moveSquares(view.legal_moves[0]).from;
    const allowed = new Set(
      view.legal_moves.filter((m) => m.startsWith(origin)).map((m) => moveSquares(m).to),
    );
    let bad = '';
    outer: for (const letter of 'abcdefghi') {
      for (const digit of '1234567890') {
        const square = `${letter}${digit}`;
        const { row, col } = gridAt(square);
        if (square !== origin && !allowed.has(square)
            && view.board[row][col] === '.') {
          bad = square;
          break outer;
        }
      }
    }
    expect(bad).not.toBe('');

    const boardBefore = app.boardText();
    const historyBefore = app.session!.history.length;
    await app.clickSquare(origin);
    await app.clickSquare(bad);
    expect(app.session!.history).toHaveLength(historyBefore);
    expect(app.boardText()).toEqual(boardBefore);
    expect(app.noteText).not.toBe('');
    const errorProbe = await api
      .playMove(app.session!.session_id, origin + bad)
      .catch((e) => e);
    expect(errorProbe).toBeInstanceOf(ApiError);

    // the rendered board equals a fresh render of the server's own replay
    const replay = await api.getSession(app.session!.session_id);
    expect(replay.history.map((e) => e.iccs)).toEqual(
      app.session!.history.map((e) => e.iccs),
    );
    expect(app.boardText()).toEqual(replay.board);
    const domGlyphs = [...root.querySelectorAll('.board .cell')]
      .map((c) => c.textContent ?? '')
      .join('');
    expect(domGlyphs.length).toBeGreaterThan(0);

    const { renderModel } = await import('../src/board.js');
    const fresh = renderModel(replay.board, { orientation: replay.human_side });
    expect(domGlyphs).toBe(fresh.flat().map((c) => c.glyph).join(''));
  }, 120_000);
});
