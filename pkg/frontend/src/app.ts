/** Game controller: owns the DOM under its root and talks to the API.
 *
 * The board is a pure view over server state.  Nothing here updates
 * optimistically; every render reads the last server response, and a
 * rejected move leaves the previous view in place.  One request may be
 * in flight at a time; the inputs are disabled while it is.
 */

import { Api, ApiError, DistributionEntry, ModelInfo, SessionView } from './api.js';
import { boardLines, Cell, moveSquares, renderModel } from './board.js';

const SIDE_LABEL = { Red: 'Red', Black: 'Black' } as const;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = '',
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export class PlayApp {
  private models: ModelInfo[] = [];
  private view: SessionView | null = null;
  private selected: string | null = null;
  private highlights = new Set<string>();
  private top: DistributionEntry[] | null = null;
  private inflight = false;
  private note = '';
  private noteKind: 'info' | 'error' = 'info';

  // panel controls, created once in init
  private modelPick!: HTMLSelectElement;
  private sidePick!: HTMLSelectElement;
  private policyPick!: HTMLSelectElement;
  private newButton!: HTMLButtonElement;
  private topToggle!: HTMLInputElement;
  private boardHost!: HTMLElement;
  private listHost!: HTMLElement;
  private bannerHost!: HTMLElement;
  private toastHost!: HTMLElement;
  private topHost!: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api,
  ) {}

  async init(): Promise<void> {
    this.buildSkeleton();
    await this.refreshModels();
    this.render();
  }

  /** Current session view, as last received from the server. */
  get session(): SessionView | null {
    return this.view;
  }

  get busy(): boolean {
    return this.inflight;
  }

  get selectedSquare(): string | null {
    return this.selected;
  }

  get noteText(): string {
    return this.note;
  }

  /** The rendered position as ten code lines, for display comparisons. */
  boardText(): string[] {
    if (!this.view) return [];
    return boardLines(this.currentGrid());
  }

  async refreshModels(): Promise<void> {
    this.models = (await this.api.listModels()).filter((m) => m.loadable);
    this.modelPick.innerHTML = '';
    for (const model of this.models) {
      const option = el('option', '', describeModel(model));
      option.value = model.id;
      this.modelPick.appendChild(option);
    }
  }

  async newGame(): Promise<void> {
    if (this.inflight) return;
    const modelId = this.modelPick.value;
    if (!modelId) {
      this.showNote('no model available', 'error');
      this.render();
      return;
    }
    this.inflight = true;
    this.render();
    try {
      this.view = await this.api.createSession({
        model_id: modelId,
        human_side: this.sidePick.value as 'Red' | 'Black',
        policy: this.policyPick.value as 'argmax' | 'sample',
      });
      this.selected = null;
      this.highlights.clear();
      this.top = null;
      this.showNote('');
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        // stale picker: the checkpoint went away under us
        this.showNote(err.message, 'error');
        await this.refreshModels().catch(() => undefined);
      } else {
        this.showNote(describeError(err), 'error');
      }
    } finally {
      this.inflight = false;
      this.render();
    }
  }

  /**
   * The two-click move flow.  First click on an own piece selects it;
   * the second click submits origin+destination as coordinate text and
   * lets the server decide.  Returns after the view is re-rendered.
   */
  async clickSquare(square: string): Promise<void> {
    const view = this.view;
    if (this.inflight || !view || view.status !== 'Ongoing') return;
    if (view.turn !== view.human_side) return;

    const cell = this.cellAt(square);
    if (cell && cell.side === view.human_side) {
      this.selected = square;
      this.highlights = new Set(
        view.legal_moves
          .filter((m) => m.startsWith(square))
          .map((m) => moveSquares(m).to),
      );
      this.render();
      return;
    }
    if (!this.selected) return;
    await this.submitMove(this.selected + square);
  }

  private async submitMove(text: string): Promise<void> {
    if (!this.view) return;
    this.inflight = true;
    this.render();
    try {
      const reply = await this.api.playMove(
        this.view.session_id,
        text,
        this.topToggle.checked,
      );
      this.view = reply;
      this.top = reply.distribution ?? null;
      this.selected = null;
      this.highlights.clear();
      this.showNote('');
    } catch (err) {
      if (err instanceof ApiError && err.legalMoves.length > 0 && this.selected) {
        const origin = this.selected;
        this.highlights = new Set(
          err.legalMoves
            .filter((m) => m.startsWith(origin))
            .map((m) => moveSquares(m).to),
        );
      }
      this.showNote(describeError(err), 'error');
    } finally {
      this.inflight = false;
      this.render();
    }
  }

  // -- rendering ----------------------------------------------------------

  private buildSkeleton(): void {
    this.root.innerHTML = '';
    const panel = el('div', 'panel');

    this.modelPick = el('select', 'pick-model');
    this.sidePick = el('select', 'pick-side');
    for (const side of ['Red', 'Black'] as const) {
      const option = el('option', '', SIDE_LABEL[side]);
      option.value = side;
      this.sidePick.appendChild(option);
    }
    this.policyPick = el('select', 'pick-policy');
    for (const policy of ['argmax', 'sample']) {
      const option = el('option', '', policy);
      option.value = policy;
      this.policyPick.appendChild(option);
    }
    this.newButton = el('button', 'new-game', 'New game');
    this.newButton.addEventListener('click', () => void this.newGame());

    this.topToggle = el('input', 'top-toggle');
    this.topToggle.type = 'checkbox';
    const toggleLabel = el('label', 'top-label', " show model's top moves");
    toggleLabel.prepend(this.topToggle);

    const controls = el('div', 'controls');
    controls.append(this.modelPick, this.sidePick, this.policyPick, this.newButton, toggleLabel);

    this.bannerHost = el('div', 'banner');
    this.toastHost = el('div', 'toast');
    this.listHost = el('ol', 'moves');
    this.topHost = el('div', 'top-moves');
    panel.append(controls, this.bannerHost, this.toastHost, this.listHost, this.topHost);

    this.boardHost = el('div', 'board');
    this.root.append(this.boardHost, panel);
  }

  private currentGrid(): Cell[][] {
    const view = this.view!;
    const last = view.history.length > 0
      ? view.history[view.history.length - 1].iccs
      : null;
    return renderModel(view.board, {
      orientation: view.human_side,
      selected: this.selected,
      highlights: this.highlights,
      lastMove: last,
    });
  }

  private cellAt(square: string): Cell | null {
    if (!this.view) return null;
    for (const row of this.currentGrid()) {
      for (const cell of row) {
        if (cell.square === square) return cell;
      }
    }
    return null;
  }

  private showNote(text: string, kind: 'info' | 'error' = 'info'): void {
    this.note = text;
    this.noteKind = kind;
  }

  private render(): void {
    const view = this.view;
    const lock = this.inflight;
    this.modelPick.disabled = lock;
    this.sidePick.disabled = lock;
    this.policyPick.disabled = lock;
    this.newButton.disabled = lock;
    this.topToggle.disabled = lock;

    this.toastHost.textContent = this.noteKind === 'error' ? this.note : '';
    this.bannerHost.textContent = view ? bannerText(view) : 'no game yet';
    this.renderBoard();
    this.renderMoves();
    this.renderTop();
  }

  private renderBoard(): void {
    this.boardHost.innerHTML = '';
    if (!this.view) return;
    for (const row of this.currentGrid()) {
      for (const cell of row) {
        const node = el('div', cellClass(cell), cell.glyph);
        node.dataset.square = cell.square;
        node.addEventListener('click', () => void this.clickSquare(cell.square));
        this.boardHost.appendChild(node);
      }
    }
  }

  private renderMoves(): void {
    this.listHost.innerHTML = '';
    if (!this.view) return;
    const entries = this.view.history;
    for (let i = 0; i < entries.length; i += 2) {
      const text = entries
        .slice(i, i + 2)
        .map((e) => e.token)
        .join('  ');
      this.listHost.appendChild(el('li', 'move-pair', text));
    }
  }

  private renderTop(): void {
    this.topHost.innerHTML = '';
    if (!this.topToggle.checked || !this.top) return;
    for (const entry of this.top) {
      this.topHost.appendChild(
        el('div', 'top-entry', `${entry.token} (${entry.iccs}) ${(entry.p * 100).toFixed(1)}%`),
      );
    }
  }
}

function cellClass(cell: Cell): string {
  const classes = ['cell'];
  if (cell.side) classes.push(cell.side === 'Red' ? 'red' : 'black');
  if (cell.selected) classes.push('selected');
  if (cell.highlighted) classes.push('target');
  if (cell.lastFrom) classes.push('last-from');
  if (cell.lastTo) classes.push('last-to');
  return classes.join(' ');
}

function bannerText(view: SessionView): string {
  if (view.status === 'HumanWins') return 'You win';
  if (view.status === 'ModelWins') return 'Model wins';
  const yours = view.turn === view.human_side;
  return `${view.turn} to move${yours ? ' (you)' : ''}`;
}

function describeModel(model: ModelInfo): string {
  if (model.elo_lower !== null && model.elo_upper !== null) {
    return `${model.id} (${model.elo_lower}-${model.elo_upper})`;
  }
  return model.id;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return String(err);
}
