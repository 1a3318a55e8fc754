# Sim 모듈 초기화
