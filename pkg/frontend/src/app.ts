import { ApiClient, ApiError } from './api.js';
import { el } from './dom.js';
import { DescriptionEditor } from './components/descriptionEditor.js';
import { MetricsPanel } from './components/metricsPanel.js';
import { NoticeArea } from './components/notices.js';
import { StudyList } from './components/studyList.js';
import { ToggleBoard } from './components/toggleBoard.js';
import { VerdictBoard } from './components/verdictBoard.js';
import type { CandidateCard } from './types.js';

/** Wires the review panels to the REST client.
 *
 * Every piece of displayed state (verdicts, prefilter badges, parse chips,
 * metrics) originates from a server response; the app only routes payloads
 * into components and user actions back into requests.
 */
export class App {
  readonly notices = new NoticeArea();
  readonly studyList: StudyList;
  readonly editor: DescriptionEditor;
  readonly toggles: ToggleBoard;
  readonly board: VerdictBoard;
  readonly metrics: MetricsPanel;
  private readonly detail: HTMLElement;
  private currentStudy: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.studyList = new StudyList((id) => void this.selectStudy(id));
    this.editor = new DescriptionEditor((text) => void this.saveDescription(text));
    this.toggles = new ToggleBoard((label, seed) => void this.runFilter(label, seed));
    this.board = new VerdictBoard(
      (cid, decision) => void this.override(cid, decision),
      (card: CandidateCard) =>
        this.api.renderUrl(card.render_url, this.toggles.label(), this.toggles.seed(), 1),
    );
    this.metrics = new MetricsPanel(() => void this.loadMetrics());

    this.detail = el('section', { class: 'study-detail hidden' },
      this.editor.element,
      this.toggles.element,
      this.board.element,
      this.metrics.element,
    );
    root.append(
      el('header', {}, el('h1', {}, 'nodulescreen review')),
      this.notices.element,
      el('main', {}, this.studyList.element, this.detail),
    );
  }

  async start(): Promise<void> {
    await this.refreshList();
  }

  async refreshList(): Promise<void> {
    try {
      const listing = await this.api.listStudies();
      this.studyList.render(listing.studies);
    } catch (err) {
      this.surface(err);
    }
  }

  async selectStudy(studyId: string): Promise<void> {
    try {
      const view = await this.api.getStudy(studyId);
      this.currentStudy = studyId;
      this.detail.classList.remove('hidden');
      this.editor.setText(view.description);
      this.board.render(view.candidates);
      this.toggles.setReady(Boolean(view.description));
      if (view.description) {
        this.editor.renderParse(await this.api.parseText(view.description));
      } else {
        this.editor.renderParse(null);
      }
    } catch (err) {
      this.surface(err);
    }
  }

  async saveDescription(text: string): Promise<void> {
    if (!this.currentStudy) return;
    try {
      const result = await this.api.putDescription(this.currentStudy, text);
      this.editor.renderParse(result.parse);
      await this.refreshStudy();
    } catch (err) {
      this.surface(err);
    }
  }

  async runFilter(configLabel: string, seed: number): Promise<void> {
    if (!this.currentStudy) return;
    try {
      const result = await this.api.runFilter(this.currentStudy, configLabel, seed);
      this.notices.show('info', `filtered ${result.verdicts.length} candidates under ${result.config}`);
      await this.refreshStudy();
    } catch (err) {
      this.surface(err);
    }
  }

  async override(candidateId: string, decision: 'keep' | 'discard' | 'reject'): Promise<void> {
    if (!this.currentStudy) return;
    try {
      await this.api.putVerdict(this.currentStudy, candidateId, decision, 'reviewer override');
      await this.refreshStudy();
    } catch (err) {
      this.surface(err);
    }
  }

  async loadMetrics(): Promise<void> {
    if (!this.currentStudy) return;
    try {
      this.metrics.render(await this.api.getMetrics(this.currentStudy));
    } catch (err) {
      if (err instanceof ApiError) {
        this.metrics.showError(err.message);
      } else {
        this.surface(err);
      }
    }
  }

  private async refreshStudy(): Promise<void> {
    if (!this.currentStudy) return;
    const view = await this.api.getStudy(this.currentStudy);
    this.board.render(view.candidates);
    this.toggles.setReady(Boolean(view.description));
    await this.refreshList();
  }

  /** Route failures into the notice banner; 409s are conflicts the reviewer
   * must see (someone else is filtering, or an upload already exists). */
  private surface(err: unknown): void {
    if (err instanceof ApiError) {
      this.notices.show(err.status === 409 ? 'conflict' : 'error', err.message);
    } else {
      this.notices.show('error', String(err));
    }
  }
}
