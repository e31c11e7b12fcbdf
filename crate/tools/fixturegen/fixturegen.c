/* Encodes a synthetic moving pattern with libx264 and writes the raw Annex B
 * stream plus the encoder-reported packet sizes and picture types.
 *
 *   fixturegen OUT.h264 OUT.csv FRAMES WIDTH HEIGHT X264_PARAMS
 */
#include <libavcodec/avcodec.h>
#include <libavutil/opt.h>
#include <stdio.h>
#include <stdlib.h>

static void drain(AVCodecContext *ctx, AVPacket *pkt, FILE *bs, FILE *csv, int *idx) {
    while (avcodec_receive_packet(ctx, pkt) == 0) {
        int qlen = 0;
        uint8_t *q = av_packet_get_side_data(pkt, AV_PKT_DATA_QUALITY_STATS, &qlen);
        int pict = q && qlen >= 5 ? q[4] : 0;
        fwrite(pkt->data, 1, pkt->size, bs);
        fprintf(csv, "%d,%d,%c\n", (*idx)++, pkt->size, av_get_picture_type_char(pict));
        av_packet_unref(pkt);
    }
}

int main(int argc, char **argv) {
    if (argc != 7) {
        fprintf(stderr, "usage: fixturegen OUT.h264 OUT.csv FRAMES W H X264_PARAMS\n");
        return 2;
    }
    int frames = atoi(argv[3]), w = atoi(argv[4]), h = atoi(argv[5]);
    const AVCodec *codec = avcodec_find_encoder_by_name("libx264");
    AVCodecContext *ctx = avcodec_alloc_context3(codec);
    ctx->width = w;
    ctx->height = h;
    ctx->time_base = (AVRational){1, 25};
    ctx->framerate = (AVRational){25, 1};
    ctx->pix_fmt = AV_PIX_FMT_YUV420P;
    ctx->thread_count = 1;
    av_opt_set(ctx->priv_data, "preset", "medium", 0);
    av_opt_set(ctx->priv_data, "x264-params", argv[6], 0);
    if (avcodec_open2(ctx, codec, NULL) < 0) {
        fprintf(stderr, "cannot open encoder\n");
        return 1;
    }
    FILE *bs = fopen(argv[1], "wb"), *csv = fopen(argv[2], "w");
    fprintf(csv, "frame_index,size_bytes,picture_type\n");
    AVFrame *f = av_frame_alloc();
    f->format = ctx->pix_fmt;
    f->width = w;
    f->height = h;
    av_frame_get_buffer(f, 0);
    AVPacket *pkt = av_packet_alloc();
    unsigned seed = 12345;
    int idx = 0;
    for (int i = 0; i < frames; i++) {
        av_frame_make_writable(f);
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++) {
                seed = seed * 1103515245u + 12345u;
                int v = ((x + 3 * i) ^ (y + i)) & 0xff;
                if (i % 11 == 7) v = 255 - v; /* abrupt change */
                f->data[0][y * f->linesize[0] + x] = (uint8_t)(v + ((seed >> 16) & 7));
            }
        for (int y = 0; y < h / 2; y++)
            for (int x = 0; x < w / 2; x++) {
                f->data[1][y * f->linesize[1] + x] = (uint8_t)(128 + x + i);
                f->data[2][y * f->linesize[2] + x] = (uint8_t)(128 - y + i);
            }
        f->pts = i;
        avcodec_send_frame(ctx, f);
        drain(ctx, pkt, bs, csv, &idx);
    }
    avcodec_send_frame(ctx, NULL);
    drain(ctx, pkt, bs, csv, &idx);
    fclose(bs);
    fclose(csv);
    avcodec_free_context(&ctx);
    av_frame_free(&f);
    av_packet_free(&pkt);
    return 0;
}
